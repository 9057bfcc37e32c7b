"""Extractor acceptance: dumps validate, normalize, and keep structure.

Uses tiny randomly initialized checkpoints built on the fly (a word-level
fast tokenizer shared by a 2-layer GPT2 head and a 2-layer RoBERTa MLM
head), so no downloads are needed. The scoring package is exercised only
through its CLI, never imported.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import (
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    RobertaConfig,
    RobertaForMaskedLM,
)

from oddball_extractor.cli import main as extract_main
from oddball_extractor.extract import ExtractionConfig, extract_sentences

SENTENCES = [
    "i was born in new york city",
    "i was born in paris a small village",
    "the cat sat on the mat",
    "she walked to the market yesterday",
    "he writes code every single day",
    "the weather in york is cold",
    "a small village near the city",
    "they played chess in the park",
    "my cat chased the red ball",
    "we read books about new ideas",
]

WORDS = sorted({w for s in SENTENCES for w in s.split()} | {"unusualword"})
SPECIALS = ["<s>", "</s>", "<unk>", "<pad>", "<mask>"]


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {tok: i for i, tok in enumerate(SPECIALS + WORDS)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="<s>",
        eos_token="</s>",
        unk_token="<unk>",
        pad_token="<pad>",
        mask_token="<mask>",
        cls_token="<s>",
        sep_token="</s>",
    )


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory):
    torch.manual_seed(0)
    tokenizer = build_tokenizer()
    vocab_size = len(tokenizer)

    causal_dir = tmp_path_factory.mktemp("tiny-causal")
    causal = GPT2LMHeadModel(GPT2Config(
        vocab_size=vocab_size, n_positions=128, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=tokenizer.bos_token_id, eos_token_id=tokenizer.eos_token_id,
    ))
    causal.eval()
    causal.save_pretrained(causal_dir)
    tokenizer.save_pretrained(causal_dir)

    masked_dir = tmp_path_factory.mktemp("tiny-masked")
    masked = RobertaForMaskedLM(RobertaConfig(
        vocab_size=vocab_size, hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=130,
        pad_token_id=tokenizer.pad_token_id, bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    ))
    masked.eval()
    masked.save_pretrained(masked_dir)
    tokenizer.save_pretrained(masked_dir)

    return {"causal": str(causal_dir), "masked": str(masked_dir),
            "vocab_size": vocab_size}


@pytest.fixture(scope="session")
def sentences_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("input") / "sentences.txt"
    path.write_text("\n".join(SENTENCES) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def causal_dump(model_dirs, sentences_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("dumps") / "causal.dump.jsonl"
    assert run_extract(model_dirs["causal"], sentences_file, out) == 0
    return out


@pytest.fixture(scope="session")
def masked_dump(model_dirs, sentences_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("dumps") / "masked.dump.jsonl"
    assert run_extract(model_dirs["masked"], sentences_file, out, mode="masked") == 0
    return out


def run_extract(model_dir, sentences_file, out, mode="causal", k=8, prompt=None,
                extra=()):
    argv = ["--model", str(model_dir), "--mode", mode, "--k", str(k),
            "--in", str(sentences_file), "--out", str(out), *extra]
    if prompt is not None:
        argv += ["--prompt", prompt]
    return extract_main(argv)


def run_primary_validate(dump_path) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "oddball.cli", "validate", str(dump_path)],
        capture_output=True, text=True,
    )


def load_records(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines()]


class TestCausal:
    def test_output_passes_primary_validate(self, causal_dump):
        result = run_primary_validate(causal_dump)
        assert result.returncode == 0, result.stdout + result.stderr
        assert "OK: 10 sentences" in result.stdout

    def test_distributions_normalize(self, causal_dump):
        for record in load_records(causal_dump):
            for token in record["tokens"]:
                total = sum(token["top"]) + token.get("res", 0.0)
                assert abs(total - 1.0) < 1e-3
                assert len(token["top"]) <= 8
                assert token["top"] == sorted(token["top"], reverse=True)

    def test_spans_cover_surfaces(self, causal_dump):
        for record in load_records(causal_dump):
            for token in record["tokens"]:
                s, e = token["span"]
                assert record["text"][s:e] == token["t"]

    def test_p_actual_recorded_even_outside_top_k(self, model_dirs, sentences_file,
                                                  tmp_path):
        out = tmp_path / "k1.dump.jsonl"
        run_extract(model_dirs["causal"], sentences_file, out, k=1)
        records = load_records(out)
        outside = 0
        for record in records:
            for token in record["tokens"]:
                assert len(token["top"]) == 1
                assert 0.0 <= token["p"] <= 1.0
                if token["p"] < token["top"][0]:
                    outside += 1
        assert outside > 0  # random model: most actual tokens are not the argmax
        assert run_primary_validate(out).returncode == 0

    def test_full_vocab_depth_gives_zero_residual(self, model_dirs, sentences_file,
                                                  tmp_path):
        out = tmp_path / "full.dump.jsonl"
        run_extract(model_dirs["causal"], sentences_file, out,
                    k=model_dirs["vocab_size"])
        for record in load_records(out):
            for token in record["tokens"]:
                assert "res" not in token
                assert len(token["top"]) == model_dirs["vocab_size"]
                # no truncation: the actual token is always a stored outcome
                assert token["p"] >= token["top"][-1]


class TestMasked:
    def test_output_passes_primary_validate(self, masked_dump):
        assert run_primary_validate(masked_dump).returncode == 0

    def test_spans_match_causal_mode(self, causal_dump, masked_dump):
        for a, b in zip(load_records(causal_dump), load_records(masked_dump)):
            assert [t["span"] for t in a["tokens"]] == [t["span"] for t in b["tokens"]]
            assert [t["t"] for t in a["tokens"]] == [t["t"] for t in b["tokens"]]


class TestPrompt:
    @pytest.mark.parametrize("mode", ["causal", "masked"])
    def test_prompt_keeps_token_structure(self, model_dirs, sentences_file, tmp_path,
                                          mode):
        plain_out = tmp_path / f"{mode}-plain.jsonl"
        prompt_out = tmp_path / f"{mode}-prompt.jsonl"
        prompt = "an example of a grammatically correct text :"
        run_extract(model_dirs[mode], sentences_file, plain_out, mode=mode)
        run_extract(model_dirs[mode], sentences_file, prompt_out, mode=mode,
                    prompt=prompt)
        plain = load_records(plain_out)
        prompted = load_records(prompt_out)
        changed = 0
        for a, b in zip(plain, prompted):
            assert [t["t"] for t in a["tokens"]] == [t["t"] for t in b["tokens"]]
            assert [t["span"] for t in a["tokens"]] == [t["span"] for t in b["tokens"]]
            assert b["meta"]["prompt"] == prompt
            changed += sum(
                ta["p"] != tb["p"] for ta, tb in zip(a["tokens"], b["tokens"])
            )
        assert changed > 0  # conditioning moved the probabilities

    def test_prompted_output_validates(self, model_dirs, sentences_file, tmp_path):
        out = tmp_path / "prompted.jsonl"
        run_extract(model_dirs["causal"], sentences_file, out, prompt="context :")
        assert run_primary_validate(out).returncode == 0


class TestFailueModes:
    def test_missing_input_file(self, model_dirs, tmp_path):
        code = extract_main(["--model", model_dirs["causal"],
                             "--in", str(tmp_path / "absent.txt"),
                             "--out", str(tmp_path / "o.jsonl")])
        assert code == 2

    def test_no_partial_output_on_failure(self, model_dirs, tmp_path):
        bad_input = tmp_path / "bad.txt"
        # second sentence tokenizes to nothing -> extraction fails midway
        bad_input.write_text("the cat sat\n   \n", encoding="utf-8")
        out = tmp_path / "out.jsonl"
        code = extract_main(["--model", model_dirs["causal"],
                             "--in", str(bad_input), "--out", str(out)])
        assert code == 1
        assert not out.exists()
        assert not list(tmp_path.glob("*.part"))

    def test_bad_k_is_usage_error(self, model_dirs, sentences_file, tmp_path):
        code = extract_main(["--model", model_dirs["causal"], "--k", "0",
                             "--in", str(sentences_file),
                             "--out", str(tmp_path / "o.jsonl")])
        assert code == 2

    def test_determinism(self, model_dirs, sentences_file, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_extract(model_dirs["causal"], sentences_file, a)
        run_extract(model_dirs["causal"], sentences_file, b)
        assert a.read_bytes() == b.read_bytes()


class TestPythonApi:
    def test_streaming_records(self, model_dirs):
        config = ExtractionConfig(model=model_dirs["causal"], k=4)
        records = list(extract_sentences(["the cat sat"], config))
        assert len(records) == 1
        assert records[0]["id"] == "1"
        assert [t["t"] for t in records[0]["tokens"]] == ["the", "cat", "sat"]


def test_zz_secondary_acceptance_summary(model_dirs, sentences_file, causal_dump,
                                         masked_dump, tmp_path):
    """10-sentence sample: validates, normalizes, span-aligned modes,
    prompt-invariant token structure."""
    try:
        assert run_primary_validate(causal_dump).returncode == 0
        assert run_primary_validate(masked_dump).returncode == 0
        for dump in (causal_dump, masked_dump):
            for record in load_records(dump):
                for token in record["tokens"]:
                    assert abs(sum(token["top"]) + token.get("res", 0.0) - 1.0) < 1e-3
        for a, b in zip(load_records(causal_dump), load_records(masked_dump)):
            assert [t["span"] for t in a["tokens"]] == [t["span"] for t in b["tokens"]]
        prompted = tmp_path / "prompted.jsonl"
        run_extract(model_dirs["causal"], sentences_file, prompted,
                    prompt="a correct text :")
        for a, b in zip(load_records(causal_dump), load_records(prompted)):
            assert [t["span"] for t in a["tokens"]] == [t["span"] for t in b["tokens"]]
            assert [t["t"] for t in a["tokens"]] == [t["t"] for t in b["tokens"]]
    except BaseException:
        print("ACCEPTANCE FAIL: extractor 10-sentence sample")
        raise
    print("ACCEPTANCE PASS: extractor 10-sentence sample (validate, "
          "normalization, span alignment, prompt structure)")
