"""Token anomaly detection from language-model probability dumps.

The library scores every token of a sentence by how strange its
probability is within the model's predicted distribution (oddballness),
compares that against plain probability thresholds and top-K rank checks,
and evaluates all three on token-labeled error-detection corpora.
"""

__version__ = "0.1.0"

from .core import (
    BEYOND_K,
    CUBE,
    IDENTITY,
    SQUARE,
    FullDistribution,
    GFunction,
    OddballnessBounds,
    TruncatedDistribution,
    is_beyond_k,
    oddballness,
    oddballness_bounds,
    prob_of_prob,
    rank_of,
)
from .scoring import Method, ScoredToken, apply_threshold, combine, score_sentence

__all__ = [
    "BEYOND_K",
    "CUBE",
    "IDENTITY",
    "SQUARE",
    "FullDistribution",
    "GFunction",
    "Method",
    "OddballnessBounds",
    "ScoredToken",
    "TruncatedDistribution",
    "apply_threshold",
    "combine",
    "is_beyond_k",
    "oddballness",
    "oddballness_bounds",
    "prob_of_prob",
    "rank_of",
    "score_sentence",
    "__version__",
]
