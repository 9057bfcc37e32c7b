"""Dump format: parse/write round-trips, invariant validation, alignment."""

import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oddball.core import TruncatedDistribution
from oddball.dump import (
    DumpMeta,
    SentenceDump,
    TokenRecord,
    align_to_dataset_tokens,
    dump_to_text,
    parse_dump,
    sentence_to_json_line,
    write_dump,
)
from oddball.errors import AlignmentError, DumpParseError, DumpValidationError


def make_sentence(sid="s1", text="the cat sat", spans=((0, 3), (4, 7), (8, 11)),
                  dists=None, ps=(0.7, 0.25, 0.05), mode="causal", prompt=None, k=8):
    if dists is None:
        dists = [([0.7, 0.25, 0.05], 0.0)] * len(spans)
    tokens = tuple(
        TokenRecord(
            text[s:e], (s, e), p, TruncatedDistribution.from_parts(top, res)
        )
        for (s, e), p, (top, res) in zip(spans, ps, dists)
    )
    return SentenceDump(sid, text, tokens, DumpMeta("test-lm", mode, prompt, k))


class TestRoundTrip:
    def test_parse_write_identity(self):
        sentence = make_sentence(prompt="A correct text:")
        text = dump_to_text([sentence])
        (back,) = parse_dump(text)
        assert back.sentence_id == sentence.sentence_id
        assert back.text == sentence.text
        assert back.meta == sentence.meta
        assert len(back.tokens) == len(sentence.tokens)
        for a, b in zip(back.tokens, sentence.tokens):
            assert a.text == b.text and a.span == b.span and a.p_actual == b.p_actual
            assert list(a.dist.top) == list(b.dist.top)
            assert a.dist.residual == b.dist.residual

    def test_reserialization_byte_identical(self):
        sentence = make_sentence(dists=[([0.5, 0.3], 0.2), ([0.99, 0.01], 0.0),
                                        ([0.7, 0.25, 0.05], 0.0)])
        line = sentence_to_json_line(sentence)
        (back,) = parse_dump(line + "\n")
        assert sentence_to_json_line(back) == line

    def test_empty_input_yields_nothing(self):
        assert list(parse_dump("")) == []
        buf = io.StringIO()
        write_dump([], buf)
        assert buf.getvalue() == ""

    def test_binary_stream(self):
        sentence = make_sentence()
        buf = io.BytesIO()
        write_dump([sentence], buf)
        (back,) = parse_dump(io.BytesIO(buf.getvalue()))
        assert back.sentence_id == sentence.sentence_id

    def test_res_omitted_means_zero(self):
        line = sentence_to_json_line(make_sentence())
        assert '"res"' not in line
        (back,) = parse_dump(line)
        assert all(t.dist.residual == 0.0 for t in back.tokens)


words = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu"), max_codepoint=0x2FF),
    min_size=1,
    max_size=6,
)


@st.composite
def random_sentences(draw):
    toks = draw(st.lists(words, min_size=1, max_size=6))
    text = " ".join(toks)
    spans = []
    pos = 0
    for i, tok in enumerate(toks):
        start = pos if i == 0 else pos - 1  # include the separating space
        spans.append((start, pos + len(tok)))
        pos += len(tok) + 1
    sizes = draw(st.lists(st.integers(min_value=1, max_value=5),
                          min_size=len(toks), max_size=len(toks)))
    dists = []
    ps = []
    for n in sizes:
        raw = draw(st.lists(st.floats(min_value=0.01, max_value=1.0),
                            min_size=n, max_size=n))
        total = sum(raw) * draw(st.floats(min_value=1.0, max_value=1.25))
        top = sorted((v / total for v in raw), reverse=True)
        res = max(0.0, 1.0 - sum(top))
        dists.append((top, res))
        ps.append(top[len(top) // 2])
    return make_sentence(
        sid=draw(st.from_regex(r"[a-z0-9]{1,8}", fullmatch=True)),
        text=text, spans=tuple(spans), dists=dists, ps=tuple(ps),
        mode=draw(st.sampled_from(["causal", "masked"])),
        prompt=draw(st.one_of(st.none(), words)),
        k=8,
    )


@given(st.lists(random_sentences(), max_size=4))
@settings(max_examples=60, deadline=None)
def test_parse_write_roundtrip_property(sentences):
    text = dump_to_text(sentences)
    back = list(parse_dump(text))
    assert dump_to_text(back) == text
    assert [s.sentence_id for s in back] == [s.sentence_id for s in sentences]
    for a, b in zip(back, sentences):
        assert a == b or (
            a.text == b.text
            and a.meta == b.meta
            and all(
                x.text == y.text and x.span == y.span and x.p_actual == y.p_actual
                and list(x.dist.top) == list(y.dist.top)
                and x.dist.residual == y.dist.residual
                for x, y in zip(a.tokens, b.tokens)
            )
        )


def _mutate(line, path, value):
    obj = json.loads(line)
    target = obj
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    return json.dumps(obj)


class TestValidation:
    GOOD = sentence_to_json_line(make_sentence())

    def test_good_line_accepted(self):
        assert len(list(parse_dump(self.GOOD))) == 1

    def test_malformed_json_is_parse_error_with_line(self):
        with pytest.raises(DumpParseError) as err:
            list(parse_dump("ok\n{broken"))
        assert err.value.line == 1  # first line already fails

    def test_line_number_reported(self):
        two = self.GOOD + "\n" + "{not json"
        with pytest.raises(DumpParseError) as err:
            list(parse_dump(two))
        assert err.value.line == 2

    @pytest.mark.parametrize(
        "path,value,field",
        [
            (["tokens", 0, "p"], 1.5, "p"),
            (["tokens", 0, "p"], -0.1, "p"),
            (["tokens", 0, "top"], [], "top"),
            (["tokens", 0, "top"], [0.25, 0.7, 0.05], "top"),  # not descending
            (["tokens", 0, "span"], [5, 2], "span"),
            (["tokens", 0, "span"], [0, 999], "span"),
            (["meta", "mode"], "weird", "mode"),
            (["meta", "k"], 0, "k"),
        ],
    )
    def test_invariant_violations_rejected(self, path, value, field):
        bad = _mutate(self.GOOD, path, value)
        with pytest.raises(DumpValidationError) as err:
            list(parse_dump(bad))
        assert err.value.sentence_id == "s1"
        assert field in err.value.field

    def test_mass_out_of_tolerance_rejected(self):
        bad = _mutate(self.GOOD, ["tokens", 0, "res"], 0.5)  # sum 1.5
        with pytest.raises(DumpValidationError):
            list(parse_dump(bad))

    def test_residual_with_zero_floor_rejected(self):
        bad = _mutate(self.GOOD, ["tokens", 0, "top"], [0.9, 0.0])
        bad = _mutate(bad, ["tokens", 0, "res"], 0.1)
        with pytest.raises(DumpValidationError):
            list(parse_dump(bad))

    def test_overlapping_spans_rejected(self):
        bad = _mutate(self.GOOD, ["tokens", 1, "span"], [2, 7])
        with pytest.raises(DumpValidationError):
            list(parse_dump(bad))

    def test_top_longer_than_k_rejected(self):
        bad = _mutate(self.GOOD, ["meta", "k"], 2)
        with pytest.raises(DumpValidationError):
            list(parse_dump(bad))

    def test_valid_records_never_rejected_by_mutating_back(self):
        restored = _mutate(_mutate(self.GOOD, ["meta", "k"], 2), ["meta", "k"], 8)
        assert len(list(parse_dump(restored))) == 1


class TestGoldenFixture:
    """The committed dump fixture parses into the exact expected structure."""

    def test_structure(self, fixtures_dir):
        sentences = list(parse_dump((fixtures_dir / "sample.dump.jsonl").read_text()))
        assert [s.sentence_id for s in sentences] == ["s1", "s2", "s3"]
        s1 = sentences[0]
        assert s1.text == "the cat sat ."
        assert [t.span for t in s1.tokens] == [(0, 3), (3, 7), (7, 11), (11, 13)]
        assert [t.p_actual for t in s1.tokens] == [0.7, 0.25, 0.05, 0.99]
        assert list(s1.tokens[0].dist.top) == [0.7, 0.25, 0.05]
        assert sentences[2].tokens[1].dist.residual == 0.2
        assert s1.meta == DumpMeta("fixture-lm", "causal", None, 3)

    def test_reserialization_is_byte_identical(self, fixtures_dir):
        content = (fixtures_dir / "sample.dump.jsonl").read_text()
        assert dump_to_text(parse_dump(content)) == content

    def test_every_single_field_mutation_is_caught(self, fixtures_dir):
        # valid records always accepted, each broken invariant rejected
        lines = (fixtures_dir / "sample.dump.jsonl").read_text().splitlines()
        assert len(list(parse_dump("\n".join(lines)))) == 3
        breakers = [
            (["tokens", 0, "p"], 2.0),
            (["tokens", 1, "span"], [0, 2]),   # overlaps token 0
            (["meta", "mode"], "oracular"),
            (["tokens", 0, "top"], [0.05, 0.25, 0.7]),
        ]
        for path, value in breakers:
            mutated = [_mutate(lines[0], path, value)] + lines[1:]
            with pytest.raises(DumpValidationError):
                list(parse_dump("\n".join(mutated)))


class TestAlignment:
    def test_subword_example(self):
        # dataset ["New", "Yrok", "City"] vs model "New"/" Yr"/"ok"/" City"
        text = "New Yrok City"
        sentence = make_sentence(
            sid="a", text=text,
            spans=((0, 3), (3, 6), (6, 8), (8, 13)),
            ps=(0.7, 0.01, 0.25, 0.2),
            dists=[([0.7, 0.25, 0.05], 0.0)] * 4,
        )
        alignment = align_to_dataset_tokens(sentence, ["New", "Yrok", "City"])
        assert alignment.token_map == {0: [0], 1: [1, 2], 2: [3]}
        assert alignment.unaligned == ()
        assert alignment.total

    def test_identity_tokenization(self):
        sentence = make_sentence()
        alignment = align_to_dataset_tokens(sentence, ["the", "cat", "sat"])
        assert alignment.token_map == {0: [0], 1: [1], 2: [2]}

    def test_token_absent_from_text(self):
        sentence = make_sentence()
        with pytest.raises(AlignmentError):
            align_to_dataset_tokens(sentence, ["the", "dog", "sat"])

    def test_trailing_unmatched_text(self):
        sentence = make_sentence()
        with pytest.raises(AlignmentError):
            align_to_dataset_tokens(sentence, ["the", "cat"])

    def test_unaligned_dataset_token_reported(self):
        # Model tokens cover only "the" and "sat"; "cat" gets nothing.
        text = "the cat sat"
        sentence = make_sentence(
            text=text, spans=((0, 3), (8, 11)), ps=(0.7, 0.25),
            dists=[([0.7, 0.25, 0.05], 0.0)] * 2,
        )
        alignment = align_to_dataset_tokens(sentence, ["the", "cat", "sat"])
        assert alignment.unaligned == (1,)
        assert not alignment.total

    def test_model_token_straddling_words_rejected(self):
        text = "the cat sat"
        sentence = make_sentence(
            text=text, spans=((0, 6), (8, 11)), ps=(0.7, 0.25),
            dists=[([0.7, 0.25, 0.05], 0.0)] * 2,
        )
        with pytest.raises(AlignmentError):
            align_to_dataset_tokens(sentence, ["the", "cat", "sat"])

    def test_nfc_normalization(self):
        # decomposed e + combining acute in the text, composed in the dataset
        text = "café au"
        sentence = make_sentence(
            text=text, spans=((0, 5), (5, 8)), ps=(0.7, 0.25),
            dists=[([0.7, 0.25, 0.05], 0.0)] * 2,
        )
        alignment = align_to_dataset_tokens(sentence, ["café", "au"])
        assert alignment.token_map == {0: [0], 1: [1]}

    def test_surjective_onto_dataset_tokens(self):
        # every model token maps somewhere, nothing maps twice
        sentence = make_sentence()
        alignment = align_to_dataset_tokens(sentence, ["the", "cat", "sat"])
        seen = [i for indices in alignment.token_map.values() for i in indices]
        assert sorted(seen) == list(range(len(sentence.tokens)))
