"""Unbiased best-of-k estimators computed from n >= k samples.

max@k is the expected maximum over a uniformly random size-k subset of the
samples; min@k and red@k derive from it. The estimate is exact in
expectation for any n >= k, which lets a single pool of n samples stand in
for many independent k-sample draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, InvalidK, ZeroOriginal


@dataclass(frozen=True)
class SampleSet:
    """Original score plus per-candidate (score, valid) pairs for one proof."""

    original_score: int
    candidates: tuple[tuple[int, bool], ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a sample set needs at least one candidate")
        if self.original_score < 0 or any(s < 0 for s, _ in self.candidates):
            raise ValueError("scores must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.candidates)


def effective_scores(samples: SampleSet) -> list[int]:
    """Per-candidate score with invalid attempts reverting to the original.

    A valid candidate contributes min(original, candidate); an invalid one
    contributes the original score unchanged.
    """
    orig = samples.original_score
    return [min(orig, score) if valid else orig for score, valid in samples.candidates]


def _subset_max_weights(n: int, k: int) -> np.ndarray:
    """Weight of the i-th smallest sample in the subset-maximum average.

    Returns w[i] = C(i-1, k-1) / C(n, k) for i = 1..n. Each weight is built
    from its neighbor by a single factor ratio; no large binomials are ever
    formed, so this stays finite for any n, k.
    """
    weights = np.zeros(n)
    if k == n:
        weights[-1] = 1.0
        return weights
    # w_n = k/n, and w_i = w_{i+1} * (i-k+1)/i going down to i = k.
    i = np.arange(k, n, dtype=float)  # i = k .. n-1
    ratios = (i - k + 1.0) / i
    tail = np.cumprod(ratios[::-1])[::-1]
    weights[k - 1 : n - 1] = (k / n) * tail
    weights[n - 1] = k / n
    return weights


def max_at_k(values, k: int) -> float:
    """Unbiased estimate of the expected maximum of k random samples."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} outside 1..{n}")
    return float(np.dot(_subset_max_weights(n, k), x))


def min_at_k(values, k: int) -> float:
    """Unbiased estimate of the expected minimum of k random samples."""
    x = np.asarray(values, dtype=float)
    return -max_at_k(-x, k)


def red_at_k(samples: SampleSet, k: int) -> float:
    """Expected best relative shortening over k attempts, in [0, 1]."""
    if samples.original_score == 0:
        raise ZeroOriginal("relative reduction is undefined for a zero-length original")
    return 1.0 - min_at_k(effective_scores(samples), k) / samples.original_score


def dataset_aggregate(per_proof) -> tuple[float, float]:
    """Mean (min@k, red@k) over a dataset of per-proof values."""
    pairs = list(per_proof)
    if not pairs:
        raise EmptyDataset("no per-proof values to aggregate")
    mins = [m for m, _ in pairs]
    reds = [r for _, r in pairs]
    return float(np.mean(mins)), float(np.mean(reds))
