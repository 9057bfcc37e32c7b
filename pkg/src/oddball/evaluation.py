"""Labeled-corpus parsing, token-level F-beta and threshold tuning.

Datasets use the shared-task TSV shape: ``token<TAB>label`` per line with
labels "c" (correct) / "i" (incorrect) and a blank line between sentences.
Counts are micro-aggregated over all tokens of the corpus, and the default
beta of 0.5 weighs precision twice as much as recall.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import IO, Iterable, Sequence, Union

import numpy as np

from .errors import DatasetParseError, EvalError, UsageError
from .scoring import Method, check_threshold, flag_value

LABELS = ("c", "i")


@dataclass(frozen=True)
class LabeledSentence:
    """Dataset tokens with binary gold labels ("c"/"i")."""

    tokens: tuple[tuple[str, str], ...]

    @property
    def surfaces(self) -> list[str]:
        return [t for t, _ in self.tokens]

    @property
    def gold_flags(self) -> list[bool]:
        return [label == "i" for _, label in self.tokens]


def parse_multiged_tsv(stream: Union[str, IO, Iterable[str]]) -> list[LabeledSentence]:
    """Parse token/label TSV into sentences; the final sentence is flushed
    at EOF even without a trailing separator. An empty file yields no
    sentences."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    sentences: list[LabeledSentence] = []
    current: list[tuple[str, str]] = []
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            if current:
                sentences.append(LabeledSentence(tuple(current)))
                current = []
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetParseError(line_no, f"expected token<TAB>label, got {line!r}")
        token, label = parts
        if not token:
            raise DatasetParseError(line_no, "empty token")
        if label not in LABELS:
            raise DatasetParseError(line_no, f"unknown label {label!r}; expected 'c' or 'i'")
        current.append((token, label))
    if current:
        sentences.append(LabeledSentence(tuple(current)))
    return sentences


def format_multiged_tsv(sentences: Iterable[LabeledSentence]) -> str:
    """Canonical serialization: every sentence block ends with a blank line."""
    out = []
    for sentence in sentences:
        for token, label in sentence.tokens:
            out.append(f"{token}\t{label}\n")
        out.append("\n")
    return "".join(out)


@dataclass(frozen=True)
class EvalResult:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f_beta: float
    beta: float


def f_beta(flags: Sequence[bool], gold: Sequence[bool], beta: float = 0.5) -> EvalResult:
    """Micro-aggregated F-beta with "incorrect" as the positive class.

    Zero denominators yield 0 for the affected ratio.
    """
    if len(flags) != len(gold):
        raise EvalError(f"flags ({len(flags)}) and gold ({len(gold)}) differ in length")
    tp = fp = fn = 0
    for flag, bad in zip(flags, gold):
        if flag and bad:
            tp += 1
        elif flag:
            fp += 1
        elif bad:
            fn += 1
    return _result_from_counts(tp, fp, fn, beta)


def _result_from_counts(tp: int, fp: int, fn: int, beta: float) -> EvalResult:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    b2 = beta * beta
    denom = b2 * precision + recall
    f = (1 + b2) * precision * recall / denom if denom else 0.0
    return EvalResult(tp, fp, fn, precision, recall, f, beta)


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    flagged: int
    result: EvalResult


@dataclass(frozen=True)
class SweepResult:
    """Full threshold grid with the argmax by F-beta.

    Ties break toward fewer flags (larger threshold for oddballness/topk,
    smaller for probability), favoring precision like F0.5 itself does.
    ``degenerate`` marks a gold side with no incorrect tokens at all.
    """

    grid: tuple[SweepPoint, ...]
    best_threshold: float
    best_f: float
    degenerate: bool


def tune_threshold(
    scores: Sequence[float],
    gold: Sequence[bool],
    method: Method,
    grid: Sequence[float],
    beta: float = 0.5,
) -> SweepResult:
    """Evaluate every grid point in one sort-then-sweep pass.

    Scores are sorted once; each grid point's flagged/TP counts come from
    binary search rather than a per-threshold rescan, so the brute-force
    per-point evaluation is reproduced exactly at O((n + m) log n).
    """
    if len(grid) == 0:
        raise UsageError("threshold grid must be nonempty")
    if len(scores) != len(gold):
        raise EvalError(f"scores ({len(scores)}) and gold ({len(gold)}) differ in length")
    thresholds = [check_threshold(method, t) for t in grid]
    if sorted(thresholds) != list(thresholds):
        raise UsageError("threshold grid must be sorted ascending")

    all_scores = np.sort(np.asarray(scores, dtype=np.float64))
    bad_scores = np.sort(np.asarray([s for s, b in zip(scores, gold) if b], dtype=np.float64))
    n = all_scores.size
    n_bad = bad_scores.size
    grid_arr = np.asarray(thresholds, dtype=np.float64)

    if method.higher_is_anomalous:
        # flag: score > t
        flagged = n - np.searchsorted(all_scores, grid_arr, side="right")
        tps = n_bad - np.searchsorted(bad_scores, grid_arr, side="right")
    else:
        # flag: score < t
        flagged = np.searchsorted(all_scores, grid_arr, side="left")
        tps = np.searchsorted(bad_scores, grid_arr, side="left")

    points = []
    for t, n_flagged, tp in zip(thresholds, flagged.tolist(), tps.tolist()):
        points.append(
            SweepPoint(t, n_flagged, _result_from_counts(tp, n_flagged - tp, n_bad - tp, beta))
        )

    def preference(point: SweepPoint) -> tuple:
        t_pref = point.threshold if method.higher_is_anomalous else -point.threshold
        return (point.result.f_beta, -point.flagged, t_pref)

    best = max(points, key=preference)
    return SweepResult(tuple(points), best.threshold, best.result.f_beta, n_bad == 0)


def evaluate_run(
    scores: Sequence[float],
    gold: Sequence[bool],
    threshold: float,
    method: Method,
    beta: float = 0.5,
) -> EvalResult:
    """Dev-tuned threshold applied unchanged: flag, then count."""
    threshold = check_threshold(method, threshold)
    flags = [flag_value(method, s, threshold) for s in scores]
    return f_beta(flags, gold, beta)


def default_grid(method: Method, k_depth: int | None = None) -> list[float]:
    """Per-method default sweep grids.

    Oddballness sweeps 0.00..1.00 in 0.01 steps; probability sweeps a
    1-2-5 logarithmic ladder from 1e-6 to 1e-1 (refinement near the
    optimum happens in the pipeline layer); topk sweeps every integer rank
    up to the truncation depth.
    """
    if method.kind == "oddballness":
        return [i / 100 for i in range(101)]
    if method.kind == "probability":
        grid = [float(f"{m}e-{e}") for e in range(6, 1, -1) for m in (1, 2, 5)]
        grid.append(0.1)
        return grid
    if k_depth is None or k_depth < 1:
        raise UsageError("topk grid needs the truncation depth")
    return [float(k) for k in range(1, k_depth + 1)]


def refine_probability_grid(coarse: Sequence[float], best: float) -> list[float]:
    """Geometric refinement between the coarse optimum's grid neighbors.

    Values are rounded to 12 significant digits so the grid is stable
    across libm implementations.
    """
    idx = list(coarse).index(best)
    lo = coarse[idx - 1] if idx > 0 else best / 10
    hi = coarse[idx + 1] if idx + 1 < len(coarse) else best * 10
    refined = np.geomspace(lo, hi, num=21)
    return sorted(set(float(f"{v:.12g}") for v in refined) | set(coarse))
