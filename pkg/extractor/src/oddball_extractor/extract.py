"""Emit per-token probability dumps from a causal or masked language model.

For every sentence token the dump records the model's predictive
distribution at that position, truncated to the top-K probabilities plus
the residual mass, alongside the actual token's probability (read from the
full distribution even when it falls outside the top-K).

Causal mode runs one forward pass per sentence and takes the next-token
distribution at each position; the first token is conditioned on the
configured prompt, or on the tokenizer's BOS token when no prompt is set.
Masked mode masks exactly one position per pass. Prompt tokens condition
the model but are never emitted: the sentence is tokenized on its own, so
token count and char spans are identical with and without a prompt.

The output format is the scoring pipeline's dump contract (UTF-8 JSONL,
one sentence per line); this package writes it directly and shares no code
with the scorer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np
import torch

MODES = ("causal", "masked")


class ExtractionError(Exception):
    """Model or tokenization failure, attributed to a sentence."""


@dataclass
class ExtractionConfig:
    model: str
    mode: str = "causal"
    k: int = 512
    prompt: str | None = None
    batch_size: int = 16
    device: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ExtractionError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.k < 1:
            raise ExtractionError(f"k must be >= 1, got {self.k}")
        if self.batch_size < 1:
            raise ExtractionError(f"batch_size must be >= 1, got {self.batch_size}")


class Extractor:
    def __init__(self, config: ExtractionConfig):
        from transformers import AutoModelForCausalLM, AutoModelForMaskedLM, AutoTokenizer

        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        if not self.tokenizer.is_fast:
            raise ExtractionError(
                f"model {config.model!r} has no fast tokenizer; char offsets need one"
            )
        loader = AutoModelForCausalLM if config.mode == "causal" else AutoModelForMaskedLM
        self.model = loader.from_pretrained(config.model)
        self.model.eval()
        self.device = torch.device(
            config.device or ("cuda" if torch.cuda.is_available() else "cpu")
        )
        self.model.to(self.device)

        self.prompt_ids: list[int] = []
        if config.prompt:
            self.prompt_ids = self.tokenizer(
                config.prompt, add_special_tokens=False
            )["input_ids"]

        if config.mode == "causal":
            # The first sentence token needs left context: the prompt when
            # configured, otherwise BOS.
            if self.prompt_ids:
                self.prefix = list(self.prompt_ids)
            elif self.tokenizer.bos_token_id is not None:
                self.prefix = [self.tokenizer.bos_token_id]
            else:
                raise ExtractionError(
                    "causal mode needs a prompt or a tokenizer with a BOS token "
                    "to condition the first sentence token"
                )
        else:
            if self.tokenizer.mask_token_id is None:
                raise ExtractionError("masked mode needs a tokenizer with a mask token")
            cls = self.tokenizer.cls_token_id
            sep = self.tokenizer.sep_token_id
            self.head = ([cls] if cls is not None else []) + list(self.prompt_ids)
            self.tail = [sep] if sep is not None else []

    def _truncate(self, probs: np.ndarray) -> tuple[list[float], float]:
        k = min(self.config.k, probs.size)
        if k == probs.size:
            top = np.sort(probs)[::-1]
            return [float(v) for v in top], 0.0
        idx = np.argpartition(probs, -k)[-k:]
        top = np.sort(probs[idx])[::-1]
        residual = max(0.0, float(probs.sum() - top.sum()))
        return [float(v) for v in top], residual

    def _tokenize(self, sentence: str) -> tuple[list[int], list[tuple[int, int]]]:
        enc = self.tokenizer(
            sentence, add_special_tokens=False, return_offsets_mapping=True
        )
        ids = enc["input_ids"]
        offsets = [tuple(span) for span in enc["offset_mapping"]]
        if not ids:
            raise ExtractionError("sentence produced no tokens")
        return ids, offsets

    def _causal_distributions(self, ids: list[int]) -> np.ndarray:
        input_ids = torch.tensor([self.prefix + ids], device=self.device)
        with torch.no_grad():
            logits = self.model(input_ids).logits[0]
        # logits at position j predict the token at j + 1
        start = len(self.prefix) - 1
        rows = logits[start : start + len(ids)].double()
        return torch.softmax(rows, dim=-1).cpu().numpy()

    def _masked_distributions(self, ids: list[int]) -> np.ndarray:
        base = self.head + ids + self.tail
        offset = len(self.head)
        mask_id = self.tokenizer.mask_token_id
        variants = []
        for j in range(len(ids)):
            row = list(base)
            row[offset + j] = mask_id
            variants.append(row)
        out = np.empty((len(ids), self.model.config.vocab_size))
        with torch.no_grad():
            for lo in range(0, len(variants), self.config.batch_size):
                chunk = variants[lo : lo + self.config.batch_size]
                batch = torch.tensor(chunk, device=self.device)
                logits = self.model(batch).logits
                for row_idx, j in enumerate(range(lo, lo + len(chunk))):
                    rows = logits[row_idx, offset + j].double()
                    out[j] = torch.softmax(rows, dim=-1).cpu().numpy()
        return out

    def sentence_record(self, sentence_id: str, sentence: str) -> dict:
        ids, offsets = self._tokenize(sentence)
        if self.config.mode == "causal":
            distributions = self._causal_distributions(ids)
        else:
            distributions = self._masked_distributions(ids)
        tokens = []
        for tid, (start, end), probs in zip(ids, offsets, distributions):
            top, residual = self._truncate(probs)
            entry = {
                "t": sentence[start:end],
                "span": [int(start), int(end)],
                "p": float(probs[tid]),
                "top": top,
            }
            if residual != 0.0:
                entry["res"] = residual
            tokens.append(entry)
        return {
            "id": sentence_id,
            "text": sentence,
            "meta": {
                "model": self.config.model,
                "mode": self.config.mode,
                "prompt": self.config.prompt,
                "k": self.config.k,
            },
            "tokens": tokens,
        }


def record_to_json_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def extract_sentences(
    sentences: Iterable[str], config: ExtractionConfig
) -> Iterator[dict]:
    """Yield one dump record per input sentence, in input order.

    Failures are attributed to the offending sentence and abort the run;
    callers must not keep partial output.
    """
    extractor = Extractor(config)
    for index, sentence in enumerate(sentences, start=1):
        sentence = sentence.rstrip("\n")
        try:
            yield extractor.sentence_record(str(index), sentence)
        except ExtractionError as exc:
            raise ExtractionError(f"sentence {index}: {exc}") from exc
        except Exception as exc:  # tokenizer/model internals
            raise ExtractionError(f"sentence {index}: {exc}") from exc


def write_dump(records: Iterable[dict], stream: IO[str]) -> int:
    count = 0
    for record in records:
        stream.write(record_to_json_line(record) + "\n")
        count += 1
    return count
