"""Toolkit for measuring and iteratively shortening Lean proofs."""

from .estimators import SampleSet, max_at_k, min_at_k, red_at_k
from .lexer import proof_length
from .records import Measure, ProofRecord

__version__ = "0.1.0"

__all__ = [
    "Measure",
    "ProofRecord",
    "SampleSet",
    "max_at_k",
    "min_at_k",
    "proof_length",
    "red_at_k",
    "__version__",
]
