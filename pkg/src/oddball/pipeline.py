"""File-content-level operations behind the service endpoints.

Every function here takes and returns *content* (dump text, TSV text,
rendered score lines, JSON reports) so the HTTP layer stays a thin
serialization shim and the CLI a thin client. All outputs are canonical:
rerunning on identical inputs is byte-identical.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

from . import evaluation
from .dump import SentenceDump, align_to_dataset_tokens, parse_dump
from .errors import (
    DumpParseError,
    DumpValidationError,
    EvalError,
    UnsupportedMethodError,
    UsageError,
)
from .evaluation import (
    EvalResult,
    LabeledSentence,
    SweepResult,
    default_grid,
    evaluate_run,
    parse_multiged_tsv,
    refine_probability_grid,
    tune_threshold,
)
from .scoring import (
    Method,
    ScoredToken,
    apply_threshold,
    combine,
    exactness_fraction,
    score_sentence,
)

DEFAULT_METHODS = ("probability", "oddballness", "topk")


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    line: int | None
    sentence_id: str | None
    field: str | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    sentences: int
    violations: tuple[Violation, ...]
    warnings: tuple[str, ...]

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_dump_text(text: str) -> ValidationReport:
    """Check schema plus type invariants line by line, collecting every
    violation instead of stopping at the first.

    Also warns (without failing) when a token's actual probability exceeds
    its stored maximum, which can happen under truncation drift; such
    tokens score oddballness 0 by monotonicity.
    """
    violations: list[Violation] = []
    warnings: list[str] = []
    sentences = 0
    for line_no, raw in enumerate(io.StringIO(text), start=1):
        if not raw.strip():
            continue
        try:
            parsed = list(parse_dump(raw))
        except DumpParseError as exc:
            violations.append(Violation(line_no, None, None, exc.reason))
            continue
        except DumpValidationError as exc:
            violations.append(Violation(line_no, exc.sentence_id, exc.field, exc.reason))
            continue
        sentences += 1
        for sentence in parsed:
            for i, tok in enumerate(sentence.tokens):
                if tok.p_actual > float(tok.dist.top[0]):
                    warnings.append(
                        f"sentence {sentence.sentence_id!r} token {i} ({tok.text!r}): "
                        f"p_actual {tok.p_actual!r} exceeds the stored maximum "
                        f"{float(tok.dist.top[0])!r}; oddballness is 0 by monotonicity"
                    )
    return ValidationReport(sentences, tuple(violations), tuple(warnings))


# ---------------------------------------------------------------------------
# scoring runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoredCorpus:
    ids: tuple[str, ...]
    sentence_scores: tuple[tuple[ScoredToken, ...], ...]
    dataset_tokens: tuple[tuple[str, ...], ...]
    method: Method
    k_depth: int


def _parse_sentences(dump_text: str) -> list[SentenceDump]:
    return list(parse_dump(dump_text))


def _resolve_combination(method: Method, combine_mode: str | None, has_second: bool):
    if (combine_mode is None) != (not has_second):
        raise UsageError("two dumps are required iff combination is requested")
    if combine_mode is None:
        return
    if method.kind == "topk":
        raise UnsupportedMethodError("topk scores cannot be combined across models")
    expected = "max" if method.kind == "oddballness" else "min"
    if combine_mode != expected:
        raise UsageError(
            f"{method.kind} combines in the {expected!r} direction, got {combine_mode!r}"
        )


def score_corpus(
    dump_text: str,
    method: Method,
    agg: str = "max",
    dump2_text: str | None = None,
    combine_mode: str | None = None,
    gold: Sequence[LabeledSentence] | None = None,
) -> ScoredCorpus:
    """Score a dump (optionally combined with a second one) per dataset token.

    Dataset tokens come from the gold sentences when given, otherwise from
    whitespace-splitting each sentence's text. Sentences are paired with
    gold positionally.
    """
    _resolve_combination(method, combine_mode, dump2_text is not None)
    sentences = _parse_sentences(dump_text)
    if gold is not None and len(gold) != len(sentences):
        raise EvalError(
            f"dump has {len(sentences)} sentences but gold has {len(gold)}"
        )

    dataset_tokens: list[tuple[str, ...]] = []
    for i, sentence in enumerate(sentences):
        if gold is not None:
            dataset_tokens.append(tuple(gold[i].surfaces))
        else:
            dataset_tokens.append(tuple(sentence.text.split()))

    def score_all(sents: list[SentenceDump]) -> list[tuple[ScoredToken, ...]]:
        out = []
        for sentence, tokens in zip(sents, dataset_tokens):
            alignment = align_to_dataset_tokens(sentence, tokens)
            out.append(tuple(score_sentence(sentence, alignment, method, agg)))
        return out

    scored = score_all(sentences)

    if dump2_text is not None:
        sentences2 = _parse_sentences(dump2_text)
        if len(sentences2) != len(sentences):
            raise EvalError(
                f"second dump has {len(sentences2)} sentences, first has {len(sentences)}"
            )
        for a, b in zip(sentences, sentences2):
            if a.sentence_id != b.sentence_id or a.text != b.text:
                raise EvalError(
                    f"dumps disagree on sentence {a.sentence_id!r} (id or text mismatch)"
                )
        scored2 = score_all(sentences2)
        scored = [tuple(combine(a, b, method)) for a, b in zip(scored, scored2)]

    k_depth = max((s.meta.k for s in sentences), default=1)
    return ScoredCorpus(
        ids=tuple(s.sentence_id for s in sentences),
        sentence_scores=tuple(scored),
        dataset_tokens=tuple(dataset_tokens),
        method=method,
        k_depth=k_depth,
    )


def _score_value_to_json(score: float):
    if isinstance(score, float) and math.isinf(score):
        return None
    return score


def render_score_lines(corpus: ScoredCorpus, flagged: bool) -> str:
    """Score-file content: one JSON record per sentence, mirroring the dump
    format. Beyond-K ranks serialize as null (JSON has no infinity)."""
    lines = []
    for sid, tokens in zip(corpus.ids, corpus.sentence_scores):
        record: dict = {
            "id": sid,
            "scores": [_score_value_to_json(t.score) for t in tokens],
        }
        if flagged:
            record["flags"] = [bool(t.flagged) for t in tokens]
        record["exactness"] = exactness_fraction(tokens)
        lines.append(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


@dataclass(frozen=True)
class ScoreRun:
    content: str
    sentences: int
    tokens: int
    exactness: float


def run_score(
    dump_text: str,
    method_name: str,
    g: str = "identity",
    agg: str = "max",
    dump2_text: str | None = None,
    combine_mode: str | None = None,
    gold_text: str | None = None,
    threshold: float | None = None,
) -> ScoreRun:
    method = Method.from_name(method_name, g)
    gold = parse_multiged_tsv(gold_text) if gold_text is not None else None
    corpus = score_corpus(dump_text, method, agg, dump2_text, combine_mode, gold)
    if threshold is not None:
        corpus = ScoredCorpus(
            ids=corpus.ids,
            sentence_scores=tuple(
                tuple(apply_threshold(tokens, method, threshold))
                for tokens in corpus.sentence_scores
            ),
            dataset_tokens=corpus.dataset_tokens,
            method=method,
            k_depth=corpus.k_depth,
        )
    all_tokens = [t for tokens in corpus.sentence_scores for t in tokens]
    return ScoreRun(
        content=render_score_lines(corpus, flagged=threshold is not None),
        sentences=len(corpus.ids),
        tokens=len(all_tokens),
        exactness=exactness_fraction(all_tokens),
    )


def read_score_file(text: str) -> list[dict]:
    """Parse score-file content back into records with +inf for nulls."""
    records = []
    for line_no, raw in enumerate(io.StringIO(text), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DumpParseError(line_no, f"invalid JSON in score file: {exc.msg}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "scores" not in obj:
            raise DumpParseError(line_no, "score record needs 'id' and 'scores'")
        scores = []
        for v in obj["scores"]:
            if v is None:
                scores.append(math.inf)
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                scores.append(v)
            else:
                raise DumpParseError(line_no, f"score values must be numbers or null, got {v!r}")
        records.append({"id": obj["id"], "scores": scores})
    return records


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


def _flatten(corpus_scores, gold: Sequence[LabeledSentence]):
    scores_flat: list[float] = []
    gold_flat: list[bool] = []
    for tokens, sentence in zip(corpus_scores, gold):
        flags = sentence.gold_flags
        if len(tokens) != len(flags):
            raise EvalError(
                f"scored tokens ({len(tokens)}) and gold tokens ({len(flags)}) differ"
            )
        scores_flat.extend(t.score if isinstance(t, ScoredToken) else t for t in tokens)
        gold_flat.extend(flags)
    return scores_flat, gold_flat


@dataclass(frozen=True)
class TuneRun:
    method: Method
    sweep: SweepResult
    content: str  # canonical sweep JSON


def _sweep_to_json(method: Method, sweep: SweepResult) -> str:
    obj = {
        "method": method.kind,
        "g": method.g.name if method.kind == "oddballness" else None,
        "beta": 0.5,
        "best_threshold": sweep.best_threshold,
        "best_f05": sweep.best_f,
        "degenerate": sweep.degenerate,
        "grid": [
            {
                "threshold": p.threshold,
                "flagged": p.flagged,
                "tp": p.result.tp,
                "fp": p.result.fp,
                "fn": p.result.fn,
                "precision": p.result.precision,
                "recall": p.result.recall,
                "f05": p.result.f_beta,
            }
            for p in sweep.grid
        ],
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def _tune_flat(
    scores_flat: Sequence[float],
    gold_flat: Sequence[bool],
    method: Method,
    grid: Sequence[float] | None,
    k_depth: int,
) -> SweepResult:
    if grid is not None:
        return tune_threshold(scores_flat, gold_flat, method, grid)
    coarse_grid = default_grid(method, k_depth)
    sweep = tune_threshold(scores_flat, gold_flat, method, coarse_grid)
    if method.kind == "probability":
        refined = refine_probability_grid(coarse_grid, sweep.best_threshold)
        sweep = tune_threshold(scores_flat, gold_flat, method, refined)
    return sweep


def run_tune(
    gold_text: str,
    method_name: str,
    g: str = "identity",
    agg: str = "max",
    dump_text: str | None = None,
    dump2_text: str | None = None,
    combine_mode: str | None = None,
    scores_text: str | None = None,
    grid: Sequence[float] | None = None,
) -> TuneRun:
    method = Method.from_name(method_name, g)
    gold = parse_multiged_tsv(gold_text)
    scores_flat, gold_flat, k_depth = _scores_for_eval(
        method, gold, dump_text, dump2_text, combine_mode, scores_text, agg
    )
    sweep = _tune_flat(scores_flat, gold_flat, method, grid, k_depth)
    return TuneRun(method, sweep, _sweep_to_json(method, sweep))


def _scores_for_eval(
    method: Method,
    gold: Sequence[LabeledSentence],
    dump_text: str | None,
    dump2_text: str | None,
    combine_mode: str | None,
    scores_text: str | None,
    agg: str,
):
    """Flat (scores, gold, k_depth) from either a dump run or a score file."""
    if (dump_text is None) == (scores_text is None):
        raise UsageError("exactly one of a dump or a score file must be supplied")
    if scores_text is not None:
        if dump2_text is not None or combine_mode is not None:
            raise UsageError("combination applies to dumps, not score files")
        records = read_score_file(scores_text)
        if len(records) != len(gold):
            raise EvalError(
                f"score file has {len(records)} sentences but gold has {len(gold)}"
            )
        k_depth = 1
        scores_flat: list[float] = []
        gold_flat: list[bool] = []
        for record, sentence in zip(records, gold):
            flags = sentence.gold_flags
            if len(record["scores"]) != len(flags):
                raise EvalError(
                    f"sentence {record['id']!r}: {len(record['scores'])} scores vs "
                    f"{len(flags)} gold tokens"
                )
            scores_flat.extend(record["scores"])
            gold_flat.extend(flags)
            k_depth = max(k_depth, *(int(s) for s in record["scores"] if not math.isinf(s)), 1)
        return scores_flat, gold_flat, k_depth
    corpus = score_corpus(dump_text, method, agg, dump2_text, combine_mode, gold)
    scores_flat, gold_flat = _flatten(corpus.sentence_scores, gold)
    return scores_flat, gold_flat, corpus.k_depth


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRun:
    method: Method
    threshold: float
    result: EvalResult
    content: str  # canonical eval JSON
    predictions: str  # MultiGED-shaped TSV with predicted labels


def _eval_to_json(method: Method, threshold: float, result: EvalResult) -> str:
    obj = {
        "method": method.kind,
        "g": method.g.name if method.kind == "oddballness" else None,
        "threshold": threshold,
        "beta": result.beta,
        "tp": result.tp,
        "fp": result.fp,
        "fn": result.fn,
        "precision": result.precision,
        "recall": result.recall,
        "f05": result.f_beta,
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def run_eval(
    gold_text: str,
    method_name: str,
    threshold: float,
    g: str = "identity",
    agg: str = "max",
    dump_text: str | None = None,
    dump2_text: str | None = None,
    combine_mode: str | None = None,
    scores_text: str | None = None,
) -> EvalRun:
    from .scoring import check_threshold, flag_value

    method = Method.from_name(method_name, g)
    threshold = check_threshold(method, threshold)
    gold = parse_multiged_tsv(gold_text)
    scores_flat, gold_flat, _ = _scores_for_eval(
        method, gold, dump_text, dump2_text, combine_mode, scores_text, agg
    )
    result = evaluate_run(scores_flat, gold_flat, threshold, method)

    predictions = []
    cursor = 0
    for sentence in gold:
        row = []
        for surface, _ in sentence.tokens:
            flagged = flag_value(method, scores_flat[cursor], threshold)
            row.append((surface, "i" if flagged else "c"))
            cursor += 1
        predictions.append(LabeledSentence(tuple(row)))
    pred_tsv = evaluation.format_multiged_tsv(predictions)
    return EvalRun(method, threshold, result, _eval_to_json(method, threshold, result), pred_tsv)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    label: str
    method: Method
    threshold: float
    dev: EvalResult
    test: EvalResult


@dataclass(frozen=True)
class ReportRun:
    rows: tuple[ReportRow, ...]
    warnings: tuple[str, ...]
    table: str
    summary: str  # canonical summary JSON


def _format_threshold(method: Method, threshold: float) -> str:
    if method.kind == "topk":
        return str(int(threshold))
    return format(threshold, ".6g")


def _render_table(rows: Sequence[ReportRow], ordinal_line: str) -> str:
    headers = ("Method", "Threshold", "Dev F0.5", "Test F0.5")
    cells = [
        (
            row.label,
            _format_threshold(row.method, row.threshold),
            f"{100 * row.dev.f_beta:.2f}",
            f"{100 * row.test.f_beta:.2f}",
        )
        for row in rows
    ]
    widths = [
        max(len(headers[c]), *(len(r[c]) for r in cells)) if cells else len(headers[c])
        for c in range(4)
    ]
    lines = []
    lines.append("  ".join(h.ljust(widths[c]) for c, h in enumerate(headers)).rstrip())
    lines.append("  ".join("-" * widths[c] for c in range(4)))
    for r in cells:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in range(4)).rstrip())
    lines.append("")
    lines.append(ordinal_line)
    return "\n".join(lines) + "\n"


def _ordinal_check(rows: Sequence[ReportRow]) -> tuple[bool | None, str]:
    """Check the expected ordering oddballness >= probability >= topk on
    dev F0.5; reported as a warning when violated, never a failure."""
    by_kind = {row.method.kind: row for row in rows}
    have = [k for k in ("oddballness", "probability", "topk") if k in by_kind]
    if len(have) < 2:
        return None, "ordinal check skipped: needs at least two methods"
    parts = [f"{k}={100 * by_kind[k].dev.f_beta:.2f}" for k in have]
    ok = all(
        by_kind[a].dev.f_beta >= by_kind[b].dev.f_beta for a, b in zip(have, have[1:])
    )
    chain = " >= ".join(have)
    detail = f"dev F0.5 {', '.join(parts)}"
    if ok:
        return True, f"ordinal check passed ({chain}): {detail}"
    return False, f"WARNING: ordinal check failed (expected {chain}): {detail}"


def run_report(
    dev_gold_text: str,
    test_gold_text: str,
    dev_dump_text: str,
    test_dump_text: str,
    methods: Sequence[str] | None = None,
    g: str = "identity",
    agg: str = "max",
    dev_dump2_text: str | None = None,
    test_dump2_text: str | None = None,
    grid: Sequence[float] | None = None,
) -> ReportRun:
    """Tune every method on dev, evaluate at the tuned threshold on test,
    and render the standard results table plus a machine-readable summary."""
    if (dev_dump2_text is None) != (test_dump2_text is None):
        raise UsageError("combination needs second dumps for both dev and test")
    combining = dev_dump2_text is not None

    warnings: list[str] = []
    if methods is None:
        method_names = [m for m in DEFAULT_METHODS if not (combining and m == "topk")]
        if combining:
            warnings.append("topk row skipped: ranks cannot be combined across models")
    else:
        method_names = list(methods)

    dev_gold = parse_multiged_tsv(dev_gold_text)
    test_gold = parse_multiged_tsv(test_gold_text)

    rows: list[ReportRow] = []
    for name in method_names:
        method = Method.from_name(name, g)
        combine_mode = None
        if combining:
            combine_mode = "max" if method.kind == "oddballness" else "min"
        dev_corpus = score_corpus(
            dev_dump_text, method, agg, dev_dump2_text if combining else None, combine_mode, dev_gold
        )
        dev_scores, dev_flags = _flatten(dev_corpus.sentence_scores, dev_gold)
        sweep = _tune_flat(dev_scores, dev_flags, method, grid, dev_corpus.k_depth)
        if sweep.degenerate:
            warnings.append(f"{name}: dev gold has no incorrect tokens (degenerate sweep)")

        test_corpus = score_corpus(
            test_dump_text, method, agg, test_dump2_text if combining else None, combine_mode, test_gold
        )
        test_scores, test_gold_flags = _flatten(test_corpus.sentence_scores, test_gold)
        test_result = evaluate_run(test_scores, test_gold_flags, sweep.best_threshold, method)

        dev_result = next(
            p.result for p in sweep.grid if p.threshold == sweep.best_threshold
        )
        label = name if name != "oddballness" or method.g.is_identity else f"{name}[g={method.g.name}]"
        if combining:
            label = f"{label} ({combine_mode} of two dumps)"
        rows.append(ReportRow(label, method, sweep.best_threshold, dev_result, test_result))

    passed, ordinal_line = _ordinal_check(rows)
    if passed is False:
        warnings.append(ordinal_line)

    summary_obj = {
        "beta": 0.5,
        "combined": combining,
        "rows": [
            {
                "method": row.method.kind,
                "label": row.label,
                "g": row.method.g.name if row.method.kind == "oddballness" else None,
                "threshold": row.threshold,
                "dev_f05": row.dev.f_beta,
                "test_f05": row.test.f_beta,
                "dev": {"tp": row.dev.tp, "fp": row.dev.fp, "fn": row.dev.fn,
                        "precision": row.dev.precision, "recall": row.dev.recall},
                "test": {"tp": row.test.tp, "fp": row.test.fp, "fn": row.test.fn,
                         "precision": row.test.precision, "recall": row.test.recall},
            }
            for row in rows
        ],
        "ordinal_check": {"passed": passed, "detail": ordinal_line},
        "warnings": warnings,
    }
    summary = json.dumps(summary_obj, ensure_ascii=False, indent=2) + "\n"
    table = _render_table(rows, ordinal_line)
    return ReportRun(tuple(rows), tuple(warnings), table, summary)
