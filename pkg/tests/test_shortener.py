import json

import pytest

from proofopt.backends import MockRepairer, MockSimplifier, MockVerifier, VerdictStatus
from proofopt.errors import ParseFailure
from proofopt.records import Measure, ProofRecord
from proofopt.shortener import (
    decompose,
    iteration_from_json,
    score_source,
    shorten_file,
    shorten_iteration,
    shorten_loop,
)

from conftest import mock_cfg


def record(proof: str, id: str = "t") -> ProofRecord:
    return ProofRecord(id=id, statement="theorem t : 1 = 1", proof=proof)


def test_score_source_by_measure():
    verifier = MockVerifier(mock_cfg(heartbeats_per_token=5))
    source = "t := by\n  rfl\n  simp"
    assert score_source(source, Measure.TOKEN_LENGTH, verifier) == 2
    assert score_source(source, Measure.HEARTBEATS, verifier) == 10


def test_iteration_adopts_strictly_shorter():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="rfl"))
    start = record("  norm_num\n  ring\n  rfl")
    after, itrec = shorten_iteration(start, 3, simplifier, verifier)
    assert itrec.adopted == 0  # tie-break picks the lowest index
    assert after.proof == "  rfl"
    assert itrec.score_after < itrec.score_before
    assert itrec.score_after == 1


def test_iteration_keeps_input_when_no_improvement():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="echo"))
    start = record("  rfl")
    after, itrec = shorten_iteration(start, 4, simplifier, verifier)
    assert itrec.adopted is None
    assert after.full_source == start.full_source
    assert itrec.score_after == itrec.score_before


def test_iteration_ignores_invalid_candidates():
    verifier = MockVerifier(mock_cfg(fail_token="rfl"))
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="rfl"))
    start = record("  norm_num\n  ring")
    after, itrec = shorten_iteration(start, 2, simplifier, verifier)
    assert itrec.adopted is None
    assert after.full_source == start.full_source
    assert all(c.status == "invalid" for c in itrec.candidates)


def test_iteration_skips_nonverifying_input():
    verifier = MockVerifier(mock_cfg(fail_token="FAIL"))
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="rfl"))
    start = record("  FAIL")
    after, itrec = shorten_iteration(start, 2, simplifier, verifier)
    assert itrec.note == "skipped: input does not verify"
    assert itrec.candidates == []
    assert after.full_source == start.full_source


def test_duplicate_candidates_verified_once():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="rfl"))
    start = record("  norm_num\n  ring")
    calls_before = verifier.calls
    _, itrec = shorten_iteration(start, 16, simplifier, verifier)
    # precondition check plus one verification for the single unique text
    assert verifier.calls - calls_before == 2
    assert len(itrec.candidates) == 16
    assert itrec.k_requested == 16


def test_loop_monotone_and_resumable():
    schedule = [(4, 1.0), (4, 1.0), (2, 0.5)]
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="drop_lines", seed=9))
    start = record("  have h : 1 = 1 := rfl\n  norm_num\n  ring\n  exact h", id="mono")

    seen = []
    trace = shorten_loop(
        start, schedule, simplifier, verifier, on_iteration=lambda it: seen.append(it)
    )
    scores = [it.score_before for it in trace.iterations] + [trace.iterations[-1].score_after]
    assert scores == sorted(scores, reverse=True)
    assert len(seen) == len(schedule)

    # replaying a prefix must give a byte-identical remainder
    resumed = shorten_loop(
        start, schedule, simplifier, verifier, resume_from=trace.iterations[:2]
    )
    assert json.dumps(resumed.to_json()) == json.dumps(trace.to_json())


def test_loop_rejects_empty_schedule():
    with pytest.raises(ValueError):
        shorten_loop(record("  rfl"), [], None, None)


def test_iteration_record_round_trip():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="drop_lines", seed=1))
    trace = shorten_loop(record("  a\n  b\n  c"), [(3, 1.0)], simplifier, verifier)
    itrec = trace.iterations[0]
    assert iteration_from_json(json.loads(json.dumps(itrec.to_json()))) == itrec


def test_repair_stage_guard_rejects_longer():
    verifier = MockVerifier(mock_cfg(fail_token="zeta"))
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="zeta"))
    repairer = MockRepairer(mock_cfg(mode="longer", padding=6))
    start = record("  norm_num\n  ring")
    trace = shorten_loop(
        start, [(2, 1.0)], simplifier, verifier, repairer=repairer, repair_budget=2
    )
    stage = trace.iterations[0].repair
    assert stage is not None
    assert stage.attempted > 0
    assert stage.adopted is None
    assert trace.final_source == start.full_source


def test_repair_stage_adopts_shorter():
    verifier = MockVerifier(mock_cfg(fail_token="zeta", noop_tactics=[]))
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="zeta"))
    repairer = MockRepairer(mock_cfg(mode="shorter", proof_body="rfl"))
    start = record("  norm_num\n  ring\n  simp")
    trace = shorten_loop(
        start, [(2, 1.0)], simplifier, verifier, repairer=repairer, repair_budget=1
    )
    stage = trace.iterations[0].repair
    assert stage.valid > 0
    assert stage.adopted is not None
    assert trace.final_source.endswith("rfl")
    assert trace.iterations[0].score_after == 1
    assert verifier.verify(trace.final_source).ok


def test_repair_not_triggered_when_any_candidate_valid():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="constant", proof_body="rfl"))
    repairer = MockRepairer(mock_cfg(mode="shorter"))
    trace = shorten_loop(
        record("  norm_num\n  ring"), [(2, 1.0)], simplifier, verifier, repairer=repairer
    )
    assert trace.iterations[0].repair is None


FILE_TEXT = """import Mathlib

lemma helper (n : ℕ) : n = n := by
  skip
  rfl

theorem main (n : ℕ) : n = n := by
  have h := helper n
  skip
  exact h
"""


def test_decompose_units_and_dependencies():
    plan = decompose(FILE_TEXT)
    assert plan.header == "import Mathlib"
    assert [u.name for u in plan.units] == ["helper", "main"]
    assert plan.units[0].depends_on == []
    assert plan.units[1].depends_on == ["helper"]


def test_decompose_requires_declarations():
    with pytest.raises(ParseFailure):
        decompose("import Mathlib\n\n#eval 1\n")


def test_reassemble_identity():
    plan = decompose(FILE_TEXT)
    assert decompose(plan.reassemble()).units[1].text == plan.units[1].text


def test_shorten_file_rewrites_units_in_place():
    verifier = MockVerifier(mock_cfg())
    simplifier = MockSimplifier(mock_cfg(mode="strip_noops", noop_lines=["skip"]))
    rewritten, traces = shorten_file(FILE_TEXT, [(2, 1.0)], simplifier, verifier)
    assert "skip" not in rewritten
    assert set(traces) == {"helper", "main"}
    assert rewritten.startswith("import Mathlib")
    # the rewritten file still decomposes into the same unit names
    assert [u.name for u in decompose(rewritten).units] == ["helper", "main"]


def test_shorten_file_passes_dependency_context():
    captured = []

    class SpySimplifier(MockSimplifier):
        def _simplify(self, source, k, temperature, context):
            captured.append((source, context))
            return super()._simplify(source, k, temperature, context)

    verifier = MockVerifier(mock_cfg())
    simplifier = SpySimplifier(mock_cfg(mode="echo"))
    shorten_file(FILE_TEXT, [(1, 1.0)], simplifier, verifier)
    contexts = {src.splitlines()[0].split()[1]: ctx for src, ctx in captured}
    assert contexts["helper"] == ""
    assert "lemma helper" in contexts["main"]
    assert ":= by sorry" in contexts["main"]
    assert "rfl" not in contexts["main"]  # statements only, never proofs
