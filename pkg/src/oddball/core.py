"""Oddballness and related scores over discrete probability distributions.

The oddballness of an outcome with probability ``p`` inside a distribution
``D`` is ``sum_j g((p_j - p)^+) / sum_j g(p_j)`` for a monotone continuous
``g`` with ``g(0) = 0`` and ``g(1) = 1``; with the default identity ``g``
this is just the rectified mass above ``p``, so the mode scores 0 and an
impossible event scores 1. ``prob_of_prob`` is the complementary quantity
``sum_j min(p_j, p)``, computed directly so the two can cross-check each
other.

Distributions may arrive truncated to their top-K entries plus a residual
mass. Every dropped outcome is then bounded by the smallest stored entry,
which is enough to compute either the exact score (whenever ``p`` is at
least that smallest entry) or a sound [lower, upper] interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidInputError, InvalidTruncationError, NormalizationError

# Tolerated deviation of total mass from 1 on input (float16 softmax dumps
# land well inside this). Inputs are renormalized before scoring.
NORMALIZATION_TOLERANCE = 1e-3

# Rank sentinel for "not among the stored top-K, true rank unknown but > K".
# +inf so it compares as maximally anomalous.
BEYOND_K = math.inf


@dataclass(frozen=True)
class GFunction:
    """Weighting function applied to probability terms.

    Must be nondecreasing on [0, 1] with g(0) = 0 and g(1) = 1. The
    truncation bounds additionally assume convexity, which holds for all
    shipped kinds.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    @property
    def is_identity(self) -> bool:
        return self.name == "identity"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


IDENTITY = GFunction("identity", lambda x: x)
SQUARE = GFunction("square", lambda x: x * x)
CUBE = GFunction("cube", lambda x: x * x * x)

G_FUNCTIONS = {g.name: g for g in (IDENTITY, SQUARE, CUBE)}


def resolve_g(g: Union[str, GFunction, None]) -> GFunction:
    """Look up a g kind by name; None means identity."""
    if g is None:
        return IDENTITY
    if isinstance(g, GFunction):
        return g
    try:
        return G_FUNCTIONS[g]
    except KeyError:
        raise InvalidInputError(
            f"unknown g function {g!r}; expected one of {sorted(G_FUNCTIONS)}"
        ) from None


def _check_probability(p: float, what: str = "probability") -> float:
    p = float(p)
    if not math.isfinite(p):
        raise InvalidInputError(f"{what} must be finite, got {p!r}")
    if p < 0.0 or p > 1.0:
        raise InvalidInputError(f"{what} must lie in [0, 1], got {p!r}")
    return p


def _canonicalize(probs: Sequence[float], tol: float) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("distribution must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("distribution contains non-finite probabilities")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError("distribution probabilities must lie in [0, 1]")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise NormalizationError(
            f"distribution mass {total!r} deviates from 1 by more than {tol}"
        )
    arr = np.sort(arr)[::-1]
    return arr / total


@dataclass(frozen=True, eq=False)
class FullDistribution:
    """Complete discrete distribution, canonicalized: descending, mass 1."""

    probs: np.ndarray

    @classmethod
    def from_probs(
        cls, probs: Sequence[float], tol: float = NORMALIZATION_TOLERANCE
    ) -> "FullDistribution":
        return cls(_canonicalize(probs, tol))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FullDistribution):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(
            np.all(self.probs == other.probs)
        )

    def __len__(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True, eq=False)
class TruncatedDistribution:
    """Top-K probabilities (descending) plus the residual mass of the rest.

    Values are stored exactly as given (so serialization round-trips);
    scoring renormalizes by the total mass on the fly. Every unstored
    outcome is assumed bounded by ``top[-1]``, so a positive residual with
    ``top[-1] == 0`` is contradictory and rejected.
    """

    top: np.ndarray
    residual: float

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncatedDistribution):
            return NotImplemented
        return (
            self.top.shape == other.top.shape
            and bool(np.all(self.top == other.top))
            and self.residual == other.residual
        )

    @classmethod
    def from_parts(
        cls,
        top: Sequence[float],
        residual: float = 0.0,
        tol: float = NORMALIZATION_TOLERANCE,
    ) -> "TruncatedDistribution":
        arr = np.asarray(top, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("top must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("top contains non-finite probabilities")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidInputError("top probabilities must lie in [0, 1]")
        if np.any(arr[:-1] < arr[1:]):
            raise InvalidInputError("top probabilities must be descending")
        residual = float(residual)
        if not math.isfinite(residual) or residual < 0.0 or residual > 1.0:
            raise InvalidInputError(f"residual must lie in [0, 1], got {residual!r}")
        total = float(arr.sum()) + residual
        if abs(total - 1.0) > tol:
            raise NormalizationError(
                f"top + residual mass {total!r} deviates from 1 by more than {tol}"
            )
        if residual > 0.0 and arr[-1] == 0.0:
            raise InvalidTruncationError(
                "residual mass with a zero smallest stored probability"
            )
        return cls(arr, residual)

    @property
    def total(self) -> float:
        return float(self.top.sum()) + self.residual

    @property
    def smallest(self) -> float:
        return float(self.top[-1])

    def __len__(self) -> int:
        return int(self.top.size)


@dataclass(frozen=True)
class OddballnessBounds:
    """Sound interval for an oddballness score under truncation."""

    lower: float
    upper: float
    exact: bool


DistLike = Union[FullDistribution, Sequence[float], np.ndarray]


def _as_canonical(dist: DistLike) -> np.ndarray:
    if isinstance(dist, FullDistribution):
        return dist.probs
    return _canonicalize(dist, NORMALIZATION_TOLERANCE)


def oddballness(dist: DistLike, p_i: float, g: Union[str, GFunction] = IDENTITY) -> float:
    """Oddballness of an outcome of probability ``p_i`` within ``dist``.

    ``p_i`` does not have to be a member of the distribution, so the
    impossible-event case ``p_i = 0`` is well defined (and scores 1).
    With identity ``g`` the denominator equals the total mass, which is
    exactly 1 after canonicalization, so only the numerator is computed.
    """
    g = resolve_g(g)
    p_i = _check_probability(p_i, "p_i")
    probs = _as_canonical(dist)
    excess = np.maximum(probs - p_i, 0.0)
    if g.is_identity:
        value = float(excess.sum())
    else:
        denominator = float(g(probs).sum())
        value = float(g(excess).sum()) / denominator
    return min(max(value, 0.0), 1.0)


def prob_of_prob(dist: DistLike, p_i: float) -> float:
    """Mass of "an event at least this surprising-or-likely happening".

    Computed directly as ``sum_j min(p_j, p_i)`` rather than as
    ``1 - oddballness`` so the complement relation stays an independent
    cross-check. Defined for identity g only.
    """
    p_i = _check_probability(p_i, "p_i")
    probs = _as_canonical(dist)
    value = float(np.minimum(probs, p_i).sum())
    return min(max(value, 0.0), 1.0)


def oddballness_bounds(
    dist: TruncatedDistribution, p_i: float, g: Union[str, GFunction] = IDENTITY
) -> OddballnessBounds:
    """Interval containing the true oddballness under top-K truncation.

    The worst case packs the residual into unstored outcomes of the maximal
    allowed probability ``top[-1]``: with ``m = floor(residual / top[-1])``
    whole chunks and leftover ``r``, the numerator can gain at most
    ``m * g(top[-1] - p) + g((r - p)^+)``. For identity g the interval is
    tight; for the convex non-identity kinds the denominator is bracketed
    by the same packing, which keeps the interval sound.

    The exactness condition compares ``p_i`` against the stored values as
    given (the truncation contract lives on the dump's own scale); when the
    total mass drifts from 1 within tolerance this can be off by at most
    residual * drift, far below any reported precision.
    """
    g = resolve_g(g)
    p_i = _check_probability(p_i, "p_i")
    # Exactness/tie comparisons happen on the dump's own (raw) scale; the
    # score arithmetic runs on the renormalized distribution.
    raw_smallest = dist.smallest
    total = dist.total
    top = dist.top / total
    residual = dist.residual / total
    smallest = float(top[-1])
    excess = np.maximum(top - p_i, 0.0)

    if g.is_identity:
        lower = float(excess.sum())
        if p_i >= raw_smallest or residual == 0.0:
            upper = lower
        else:
            m = math.floor(residual / smallest)
            leftover = residual - m * smallest
            upper = lower + m * (smallest - p_i) + max(leftover - p_i, 0.0)
        exact = p_i >= raw_smallest
    else:
        num_stored = float(g(excess).sum())
        den_stored = float(g(top).sum())
        if residual == 0.0:
            value = num_stored / den_stored
            lower = upper = value
        else:
            m = math.floor(residual / smallest)
            leftover = residual - m * smallest
            num_extra = m * float(g(np.float64(max(smallest - p_i, 0.0)))) + float(
                g(np.float64(max(leftover - p_i, 0.0)))
            )
            den_extra = m * float(g(np.float64(smallest))) + float(g(np.float64(leftover)))
            lower = num_stored / (den_stored + den_extra)
            upper = (num_stored + num_extra) / den_stored
        exact = p_i >= raw_smallest and residual == 0.0

    lower = min(max(lower, 0.0), 1.0)
    upper = min(max(upper, 0.0), 1.0)
    if lower > upper:  # float dust only
        lower = upper
    if exact:
        upper = lower
    return OddballnessBounds(lower, upper, exact)


def rank_of(dist: TruncatedDistribution, p_i: float) -> float:
    """1-based rank of probability ``p_i`` among the stored entries.

    Ties count as the better rank (only strictly greater entries rank
    above), so an actual token tying with the K-th candidate is still rank
    <= K. Below the smallest stored entry the exact rank is unknowable
    under truncation; returns ``BEYOND_K``.
    """
    p_i = _check_probability(p_i, "p_i")
    if p_i < dist.smallest:
        return BEYOND_K
    return 1 + int(np.sum(dist.top > p_i))


def is_beyond_k(rank: float) -> bool:
    return math.isinf(rank)
