import random

import pytest

from ner_audit.conll import (
    EntitySpan,
    extract_entities,
    name_frequency,
    normalize_iob2,
    parse_conll,
    spans_from_tags,
    tags_from_spans,
    valid_iob2,
    write_conll,
)
from ner_audit.errors import ValidationError
from ner_audit.names import builtin_registry
from tests.conftest import make_sentence


def test_parse_single_token_iob1_normalized():
    sentences = parse_conll("Juan NNP B-NP I-PER\n\n")
    assert len(sentences) == 1
    assert sentences[0].tags == ["B-PER"]
    assert sentences[0].tokens[0].annotations == ("NNP", "B-NP")


def test_parse_empty_input():
    assert parse_conll("") == []


def test_parse_docstart_and_counts():
    text = (
        "-DOCSTART- -X- O O\n\n"
        "EU NNP I-NP I-ORG\nrejects VBZ I-VP O\n\n"
        "Peter NNP I-NP I-PER\nBlackburn NNP I-NP I-PER\n\n"
        "BRUSSELS NNP I-NP I-LOC\n1996-08-22 CD I-NP O\n\n"
    )
    sentences = parse_conll(text)
    assert len(sentences) == 3
    assert {s.doc_id for s in sentences} == {0}
    assert sentences[0].tags == ["B-ORG", "O"]
    assert sentences[1].tags == ["B-PER", "I-PER"]


def test_parse_crlf_accepted():
    sentences = parse_conll("Juan NNP I-PER\r\n\r\n")
    assert sentences[0].tags == ["B-PER"]


def test_parse_inconsistent_columns_reports_line():
    with pytest.raises(ValidationError, match="line 2"):
        parse_conll("Juan NNP I-PER\nsmiled O\n\n")


def test_normalize_iob2_idempotent_and_boundary_cases():
    tags = ["I-PER", "I-PER", "O", "I-LOC", "B-LOC", "I-ORG"]
    normalized = normalize_iob2(tags)
    assert normalized == ["B-PER", "I-PER", "O", "B-LOC", "B-LOC", "B-ORG"]
    assert normalize_iob2(normalized) == normalized


def test_write_conll_shapes():
    one = make_sentence(["Hi"], ["O"])
    assert write_conll([one]) == "Hi O\n\n"
    assert write_conll([]) == ""


def test_round_trip_random_corpora():
    rng = random.Random(4)
    types = ["PER", "LOC", "ORG", "MISC"]
    for _ in range(50):
        sentences = []
        for _ in range(rng.randint(1, 6)):
            n = rng.randint(1, 8)
            tags, prev = [], "O"
            for _ in range(n):
                if prev != "O" and rng.random() < 0.4:
                    tags.append("I-" + prev[2:])
                elif rng.random() < 0.4:
                    tags.append("B-" + rng.choice(types))
                else:
                    tags.append("O")
                prev = tags[-1]
            tokens = [f"w{rng.randint(0, 20)}" for _ in range(n)]
            sentences.append(make_sentence(tokens, tags))
        reparsed = parse_conll(write_conll(sentences))
        assert [s.texts for s in reparsed] == [s.texts for s in sentences]
        assert [s.tags for s in reparsed] == [s.tags for s in sentences]


def test_extract_entities_examples():
    assert extract_entities(make_sentence(["a"], ["B-PER"])) == [EntitySpan(0, 1, "PER")]
    spans = extract_entities(make_sentence(list("abcd"), ["B-PER", "I-PER", "O", "B-LOC"]))
    assert spans == [EntitySpan(0, 2, "PER"), EntitySpan(3, 4, "LOC")]
    spans = extract_entities(make_sentence(["a", "b"], ["B-PER", "B-PER"]))
    assert spans == [EntitySpan(0, 1, "PER"), EntitySpan(1, 2, "PER")]


def test_spans_tags_round_trip_property():
    rng = random.Random(11)
    for _ in range(200):
        n = rng.randint(1, 10)
        spans, cursor = [], 0
        while cursor < n:
            if rng.random() < 0.5:
                width = rng.randint(1, min(3, n - cursor))
                spans.append(EntitySpan(cursor, cursor + width, rng.choice(["PER", "LOC"])))
                cursor += width
            else:
                cursor += 1
        tags = tags_from_spans(spans, n)
        assert valid_iob2(tags)
        assert spans_from_tags(tags) == spans
        for span in spans:
            for i in range(span.start, span.end):
                assert tags[i].endswith(span.label)


def test_name_frequency_counts_unigram_per_only():
    registry = builtin_registry()
    sentences = [
        make_sentence(["Paul", "won"], ["B-PER", "O"]),
        make_sentence(["Paul", "Simon", "won"], ["B-PER", "I-PER", "O"]),  # bigram: no count
        make_sentence(["Maria", "and", "Jose"], ["B-PER", "O", "B-PER"]),
        make_sentence(["Jose", "arrived"], ["B-PER", "O"]),
        make_sentence(["Jose", "Bay"], ["B-LOC", "I-LOC"]),  # LOC: no count
    ]
    report = name_frequency(sentences, registry)
    assert report.per_name["Paul"] == 1
    assert report.per_name["Maria"] == 1
    assert report.per_name["Jose"] == 2
    assert report.per_category["HF"] == 1
    assert report.per_category["HM"] == 2
    assert report.most_common["HM"] == ("Jose", 2)
    assert report.most_common["BF"] is None


def test_name_frequency_table_shape_most_common():
    registry = builtin_registry()
    sentences = [make_sentence(["Paul"], ["B-PER"]) for _ in range(51)]
    report = name_frequency(sentences, registry)
    assert report.most_common["WM"] == ("Paul", 51)
    assert report.per_category["WM"] == 51


def test_name_frequency_empty_corpus():
    report = name_frequency([], builtin_registry())
    assert all(v == 0 for v in report.per_name.values())
    assert all(v == 0 for v in report.per_category.values())
