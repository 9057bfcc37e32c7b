"""Per-dataset-token anomaly scores, cross-model combination, thresholding.

Three methods are supported, each with its own anomaly direction:

- ``probability``: the actual token's probability, lower is more anomalous;
- ``oddballness``: higher is more anomalous (under truncation the lower
  bound is used, so scores never over-flag);
- ``topk``: the token's rank among the stored candidates, higher is more
  anomalous, with ``BEYOND_K`` (+inf) when it fell outside the stored top.

Subword scores are reduced to one score per dataset token by an
aggregation policy before any cross-model combination, so differing
tokenizers are reconciled at the dataset-token level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

from .core import GFunction, IDENTITY, oddballness_bounds, rank_of, resolve_g
from .dump import Alignment, SentenceDump
from .errors import (
    CombinationError,
    InvalidThresholdError,
    ScoringError,
    UnsupportedMethodError,
    UsageError,
)

METHOD_KINDS = ("probability", "oddballness", "topk")
AGGREGATION_POLICIES = ("max", "mean", "first")


@dataclass(frozen=True)
class Method:
    """One of the compared detection methods; g applies to oddballness only."""

    kind: str
    g: GFunction = IDENTITY

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise UsageError(f"unknown method {self.kind!r}; expected one of {METHOD_KINDS}")

    @classmethod
    def probability(cls) -> "Method":
        return cls("probability")

    @classmethod
    def oddballness(cls, g: Union[str, GFunction] = IDENTITY) -> "Method":
        return cls("oddballness", resolve_g(g))

    @classmethod
    def topk(cls) -> "Method":
        return cls("topk")

    @classmethod
    def from_name(cls, name: str, g: Union[str, GFunction, None] = None) -> "Method":
        if name == "oddballness":
            return cls.oddballness(resolve_g(g))
        return cls(name)

    @property
    def higher_is_anomalous(self) -> bool:
        return self.kind != "probability"


@dataclass(frozen=True)
class ScoredToken:
    """Anomaly score for one dataset token.

    ``flagged`` is set only after thresholding. ``exact`` records whether
    every contributing subword score was computed without truncation slack
    (always true for probability and topk).
    """

    index: int
    score: float
    flagged: bool | None = None
    exact: bool = True


def _check_policy(policy: str) -> str:
    if policy not in AGGREGATION_POLICIES:
        raise UsageError(
            f"unknown aggregation policy {policy!r}; expected one of {AGGREGATION_POLICIES}"
        )
    return policy


def _aggregate(values: Sequence[float], policy: str, minimize: bool) -> float:
    if policy == "first":
        return values[0]
    if policy == "mean":
        return sum(values) / len(values)
    return min(values) if minimize else max(values)


def score_sentence(
    dump: SentenceDump,
    alignment: Alignment,
    method: Method,
    policy: str = "max",
) -> list[ScoredToken]:
    """One ScoredToken per dataset token, subwords reduced by ``policy``.

    The default "max" policy keeps the most anomalous subword (max
    oddballness / max rank / min probability): an error inside any subword
    marks the whole word.
    """
    policy = _check_policy(policy)
    if not alignment.total:
        missing = alignment.unaligned[0]
        raise ScoringError(
            f"dataset token {missing} has no aligned model tokens in sentence "
            f"{dump.sentence_id!r}"
        )

    out: list[ScoredToken] = []
    for index in range(alignment.n_dataset):
        record_indices = alignment.token_map[index]
        values: list[float] = []
        exact = True
        for ri in record_indices:
            record = dump.tokens[ri]
            if method.kind == "probability":
                values.append(record.p_actual)
            elif method.kind == "oddballness":
                bounds = oddballness_bounds(record.dist, record.p_actual, method.g)
                values.append(bounds.lower)
                exact = exact and bounds.exact
            else:
                values.append(rank_of(record.dist, record.p_actual))
        score = _aggregate(values, policy, minimize=not method.higher_is_anomalous)
        out.append(ScoredToken(index=index, score=score, exact=exact))
    return out


def combine(
    a: Sequence[ScoredToken], b: Sequence[ScoredToken], method: Method
) -> list[ScoredToken]:
    """Elementwise max (oddballness) or min (probability) of two runs.

    The anomaly-conservative direction in both cases: a token is as
    suspicious as the most suspicious model says (oddballness) or as likely
    as the most charitable model says (probability). Top-K ranks from
    different models are not comparable and are rejected.
    """
    if method.kind == "topk":
        raise UnsupportedMethodError("topk scores cannot be combined across models")
    if len(a) != len(b):
        raise CombinationError(f"score lists differ in length: {len(a)} vs {len(b)}")
    out = []
    for ta, tb in zip(a, b):
        if ta.index != tb.index:
            raise CombinationError(f"score lists disagree on indices: {ta.index} vs {tb.index}")
        if method.kind == "oddballness":
            score = max(ta.score, tb.score)
        else:
            score = min(ta.score, tb.score)
        out.append(ScoredToken(index=ta.index, score=score, exact=ta.exact and tb.exact))
    return out


def check_threshold(method: Method, threshold: float) -> float:
    if method.kind == "topk":
        if (
            not isinstance(threshold, (int, float))
            or isinstance(threshold, bool)
            or not float(threshold).is_integer()
            or threshold < 1
        ):
            raise InvalidThresholdError(
                f"topk threshold must be a positive integer K, got {threshold!r}"
            )
        return float(int(threshold))
    threshold = float(threshold)
    if not math.isfinite(threshold) or not (0.0 <= threshold <= 1.0):
        raise InvalidThresholdError(
            f"{method.kind} threshold must lie in [0, 1], got {threshold!r}"
        )
    return threshold


def flag_value(method: Method, score: float, threshold: float) -> bool:
    """Shared flagging rule: probability flags score < t, oddballness flags
    score > t, topk flags rank > K (beyond-K always flags)."""
    if method.kind == "probability":
        return score < threshold
    return score > threshold


def apply_threshold(
    scores: Iterable[ScoredToken], method: Method, threshold: float
) -> list[ScoredToken]:
    threshold = check_threshold(method, threshold)
    return [replace(t, flagged=flag_value(method, t.score, threshold)) for t in scores]


def exactness_fraction(scores: Sequence[ScoredToken]) -> float:
    if not scores:
        return 1.0
    return sum(1 for t in scores if t.exact) / len(scores)
