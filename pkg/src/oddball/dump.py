"""Model-agnostic distribution-dump format: parse, validate, write, align.

A dump is UTF-8, line-delimited JSON, one sentence per line:

    {"id": "...", "text": "...",
     "meta": {"model": "...", "mode": "causal"|"masked", "prompt": ...|null, "k": 512},
     "tokens": [{"t": "...", "span": [s, e], "p": 0.123,
                 "top": [...descending...], "res": 0.01}, ...]}

``res`` omitted means 0. Spans are [start, end) character offsets into
``text``, nondecreasing and non-overlapping. This format decouples model
inference (an extractor writes dumps) from scoring (this package reads
them).
"""

from __future__ import annotations

import bisect
import io
import json
import math
import unicodedata
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence, Union

from .core import TruncatedDistribution
from .errors import AlignmentError, DumpParseError, DumpValidationError, OddballError

MODES = ("causal", "masked")


@dataclass(frozen=True)
class DumpMeta:
    model: str
    mode: str
    prompt: str | None
    k: int


@dataclass(frozen=True)
class TokenRecord:
    """One sequence position: surface text, char span, actual-token
    probability and the (possibly truncated) distribution it came from."""

    text: str
    span: tuple[int, int]
    p_actual: float
    dist: TruncatedDistribution


@dataclass(frozen=True)
class SentenceDump:
    sentence_id: str
    text: str
    tokens: tuple[TokenRecord, ...]
    meta: DumpMeta


def _require(obj: dict, key: str, sentence_id: str, line: int | None):
    if key not in obj:
        raise DumpValidationError(sentence_id, key, "missing field", line)
    return obj[key]


def _sentence_from_obj(obj, line: int | None = None) -> SentenceDump:
    if not isinstance(obj, dict):
        raise DumpParseError(line or 0, "record is not a JSON object")
    sid = obj.get("id")
    if not isinstance(sid, str) or not sid:
        raise DumpValidationError(str(sid), "id", "must be a nonempty string", line)
    text = _require(obj, "text", sid, line)
    if not isinstance(text, str):
        raise DumpValidationError(sid, "text", "must be a string", line)

    meta_obj = _require(obj, "meta", sid, line)
    if not isinstance(meta_obj, dict):
        raise DumpValidationError(sid, "meta", "must be an object", line)
    model = meta_obj.get("model")
    if not isinstance(model, str) or not model:
        raise DumpValidationError(sid, "meta.model", "must be a nonempty string", line)
    mode = meta_obj.get("mode")
    if mode not in MODES:
        raise DumpValidationError(sid, "meta.mode", f"must be one of {MODES}", line)
    prompt = meta_obj.get("prompt")
    if prompt is not None and not isinstance(prompt, str):
        raise DumpValidationError(sid, "meta.prompt", "must be a string or null", line)
    k = meta_obj.get("k")
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise DumpValidationError(sid, "meta.k", "must be an integer >= 1", line)

    tokens_obj = _require(obj, "tokens", sid, line)
    if not isinstance(tokens_obj, list):
        raise DumpValidationError(sid, "tokens", "must be a list", line)

    tokens = []
    prev_end = 0
    for i, tok in enumerate(tokens_obj):
        field = f"tokens[{i}]"
        if not isinstance(tok, dict):
            raise DumpValidationError(sid, field, "must be an object", line)
        t = tok.get("t")
        if not isinstance(t, str):
            raise DumpValidationError(sid, f"{field}.t", "must be a string", line)
        span = tok.get("span")
        if (
            not isinstance(span, list)
            or len(span) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in span)
        ):
            raise DumpValidationError(sid, f"{field}.span", "must be [start, end] ints", line)
        start, end = span
        if not (0 <= start <= end <= len(text)):
            raise DumpValidationError(
                sid, f"{field}.span", f"span [{start}, {end}) outside text of length {len(text)}", line
            )
        if start < prev_end:
            raise DumpValidationError(
                sid, f"{field}.span", f"span [{start}, {end}) overlaps or precedes previous span", line
            )
        prev_end = end
        p = tok.get("p")
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not math.isfinite(p) or not (0.0 <= p <= 1.0):
            raise DumpValidationError(sid, f"{field}.p", "must be a probability in [0, 1]", line)
        top = tok.get("top")
        if not isinstance(top, list) or not top:
            raise DumpValidationError(sid, f"{field}.top", "must be a nonempty list", line)
        if len(top) > k:
            raise DumpValidationError(
                sid, f"{field}.top", f"{len(top)} entries exceed meta.k = {k}", line
            )
        res = tok.get("res", 0.0)
        if not isinstance(res, (int, float)) or isinstance(res, bool):
            raise DumpValidationError(sid, f"{field}.res", "must be a number", line)
        try:
            dist = TruncatedDistribution.from_parts(top, float(res))
        except OddballError as exc:
            raise DumpValidationError(sid, f"{field}.top/res", str(exc), line) from exc
        tokens.append(TokenRecord(t, (start, end), float(p), dist))

    return SentenceDump(sid, text, tuple(tokens), DumpMeta(model, mode, prompt, k))


def _iter_lines(stream) -> Iterator[str]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw


def parse_dump(stream: Union[str, bytes, IO, Iterable[str]]) -> Iterator[SentenceDump]:
    """Yield validated sentences from a dump stream, in file order.

    Streaming: one line is materialized at a time. Malformed JSON raises
    ``DumpParseError`` with the line number; invariant violations raise
    ``DumpValidationError`` with the sentence id and field.
    """
    for line_no, raw in enumerate(_iter_lines(stream), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise DumpParseError(line_no, f"invalid JSON: {exc.msg}") from exc
        yield _sentence_from_obj(obj, line_no)


def sentence_to_json_line(sentence: SentenceDump) -> str:
    """Canonical one-line serialization; reserializing a parsed canonical
    line is byte-identical."""
    tokens = []
    for tok in sentence.tokens:
        entry: dict = {
            "t": tok.text,
            "span": [tok.span[0], tok.span[1]],
            "p": tok.p_actual,
            "top": [float(v) for v in tok.dist.top],
        }
        if tok.dist.residual != 0.0:
            entry["res"] = tok.dist.residual
        tokens.append(entry)
    obj = {
        "id": sentence.sentence_id,
        "text": sentence.text,
        "meta": {
            "model": sentence.meta.model,
            "mode": sentence.meta.mode,
            "prompt": sentence.meta.prompt,
            "k": sentence.meta.k,
        },
        "tokens": tokens,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_dump(sentences: Iterable[SentenceDump], stream: IO) -> None:
    """Inverse of parse_dump; parse(write(xs)) == xs field-for-field."""
    binary = isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(
        stream, "mode", ""
    )
    for sentence in sentences:
        line = sentence_to_json_line(sentence) + "\n"
        stream.write(line.encode("utf-8") if binary else line)


def dump_to_text(sentences: Iterable[SentenceDump]) -> str:
    buf = io.StringIO()
    write_dump(sentences, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class Alignment:
    """Maps dataset-token indices to the model-token indices they cover."""

    token_map: dict[int, list[int]]
    unaligned: tuple[int, ...]
    n_dataset: int
    dataset_spans: tuple[tuple[int, int], ...]

    @property
    def total(self) -> bool:
        return not self.unaligned


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def _dataset_token_spans(text: str, dataset_tokens: Sequence[str]) -> list[tuple[int, int]]:
    spans = []
    pos = 0
    for idx, tok in enumerate(dataset_tokens):
        if not tok:
            raise AlignmentError(f"dataset token {idx} is empty")
        while pos < len(text) and text[pos].isspace():
            pos += 1
        candidate = text[pos : pos + len(tok)]
        if candidate != tok and _nfc(candidate) != _nfc(tok):
            raise AlignmentError(
                f"dataset token {idx} {tok!r} not found at position {pos}; text has {candidate!r}",
                span=(pos, pos + len(tok)),
            )
        spans.append((pos, pos + len(tok)))
        pos += len(tok)
    rest = text[pos:]
    if rest.strip():
        raise AlignmentError(
            f"text has trailing content {rest.strip()!r} not covered by dataset tokens",
            span=(pos, len(text)),
        )
    return spans


def align_to_dataset_tokens(dump: SentenceDump, dataset_tokens: Sequence[str]) -> Alignment:
    """Assign every model token to exactly one dataset token by span containment.

    Model-token spans are compared after stripping their leading/trailing
    whitespace (subword vocabularies carry whitespace markers); comparison
    of surfaces applies Unicode NFC to both sides. Dataset tokens that end
    up with no model tokens are reported in ``unaligned``.
    """
    spans = _dataset_token_spans(dump.text, dataset_tokens)
    if not spans and dump.tokens:
        raise AlignmentError("no dataset tokens to align model tokens against")
    starts = [s for s, _ in spans]
    token_map: dict[int, list[int]] = {i: [] for i in range(len(spans))}

    for idx, tok in enumerate(dump.tokens):
        s, e = tok.span
        while s < e and dump.text[s].isspace():
            s += 1
        while e > s and dump.text[e - 1].isspace():
            e -= 1
        if s == e:
            # Whitespace-only model token: attach it to the next dataset
            # token, or the last one if it trails the sentence.
            j = bisect.bisect_left(starts, tok.span[0])
            j = min(j, len(spans) - 1)
        else:
            j = bisect.bisect_right(starts, s) - 1
            if j < 0 or not (spans[j][0] <= s and e <= spans[j][1]):
                raise AlignmentError(
                    f"model token {idx} {tok.text!r} with span [{s}, {e}) does not fall "
                    "inside a single dataset token",
                    span=(s, e),
                )
        token_map[j].append(idx)

    unaligned = tuple(i for i in range(len(spans)) if not token_map[i])
    return Alignment(token_map, unaligned, len(spans), tuple(spans))
