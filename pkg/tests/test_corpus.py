import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corelw.corpus import (
    Corpus,
    PreprocessConfig,
    default_stopwords,
    load_corpus,
    preprocess,
    write_corpus_csv,
)
from corelw.errors import LoadError, ValidationError

ALL_ON = PreprocessConfig()


def test_preprocess_examples():
    assert preprocess("", ALL_ON) == []
    assert preprocess("Running, RUNS ran!", ALL_ON) == ["run", "run", "ran"]
    assert preprocess("a the of", ALL_ON) == []
    assert preprocess("The cell divides.", ALL_ON) == ["cell", "divid"]


def test_preprocess_flags_individually():
    cfg = PreprocessConfig(lowercase=False, strip_punctuation=False, remove_stopwords=False, stem=False)
    assert preprocess("The Cell, divides.", cfg) == ["The", "Cell,", "divides."]
    cfg = PreprocessConfig(stem=False)
    assert preprocess("The Cell, divides.", cfg) == ["cell", "divides"]
    cfg = PreprocessConfig(max_tokens=2)
    assert preprocess("cells divide grow quickly", cfg) == ["cell", "divid"]


def test_unicode_punctuation_is_stripped():
    # em dash, guillemets, inverted question mark are all category P*
    cfg = PreprocessConfig(stem=False, remove_stopwords=False)
    assert preprocess("growth—rate «fast» ¿why?", cfg) == ["growth", "rate", "fast", "why"]


def test_stopword_config_requires_list():
    with pytest.raises(ValidationError):
        PreprocessConfig(remove_stopwords=True, stopword_list=frozenset())
    assert 150 <= len(default_stopwords()) <= 200


@given(st.text(max_size=200))
@settings(max_examples=200)
def test_idempotent_without_stemming(text):
    cfg = PreprocessConfig(stem=False)
    once = preprocess(text, cfg)
    assert preprocess(" ".join(once), cfg) == once


@given(st.text(max_size=100))
def test_deterministic(text):
    assert preprocess(text, ALL_ON) == preprocess(text, ALL_ON)


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def test_load_single_record(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, [{"id": "a", "text": "The cell divides.", "score": 2}, {"id": "b", "text": "x y", "score": 1}])
    c = load_corpus(p, config=ALL_ON, num_levels=4)
    assert c.documents[0].tokens == ("cell", "divid")
    assert c.num_levels == 4
    assert c.provenance["path"] == str(p)


def test_csv_round_trip(tmp_path):
    rows = [("a", 1, 'He said "hi", then left'), ("b", 4, "Cells divide, grow\nand die.")]
    p = tmp_path / "c.csv"
    write_corpus_csv(p, rows)
    assert p.read_text(encoding="utf-8").splitlines()[0] == '"id","score","text"'
    c = load_corpus(p, "csv", PreprocessConfig(stem=False), num_levels=4)
    assert [d.id for d in c] == ["a", "b"]
    assert [d.text for d in c] == [r[2] for r in rows]
    assert c.documents[1].tokens == ("cells", "divide", "grow", "die")


def test_score_out_of_range(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, [{"id": "a", "text": "cells", "score": 5}])
    with pytest.raises(ValidationError):
        load_corpus(p, config=ALL_ON, num_levels=4)


def test_empty_after_preprocessing_names_id(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, [{"id": "ok", "text": "cells", "score": 1}, {"id": "empty1", "text": "the of a", "score": 2}])
    with pytest.raises(ValidationError, match="empty1"):
        load_corpus(p, config=ALL_ON)


def test_malformed_records(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "a", "text": "x", "score": 1}\n{not json}\n', encoding="utf-8")
    with pytest.raises(LoadError, match="line 2"):
        load_corpus(p)
    p.write_text('{"id": "a", "text": "x"}\n', encoding="utf-8")
    with pytest.raises(LoadError):
        load_corpus(p)
    q = tmp_path / "c.csv"
    q.write_text("id,score,text\na,two,hello\n", encoding="utf-8")
    with pytest.raises(LoadError, match="'a'"):
        load_corpus(q)
    with pytest.raises(LoadError):
        load_corpus(tmp_path / "missing.csv")


def test_duplicate_ids_rejected(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_jsonl(p, [{"id": "a", "text": "cells", "score": 1}, {"id": "a", "text": "cells", "score": 2}])
    with pytest.raises(ValidationError):
        load_corpus(p)


def test_stats_match_recount(tmp_path):
    rows = [(f"d{k}", 1 + k % 3, " ".join(["the cell grows"] * (k + 1))) for k in range(7)]
    p = tmp_path / "c.csv"
    write_corpus_csv(p, rows)
    c = load_corpus(p)
    lengths = [len(d.tokens) for d in c]
    s = c.stats["tokens"]
    assert (s["count"], s["max"], s["min"]) == (7, max(lengths), min(lengths))
    assert s["avg"] == pytest.approx(sum(lengths) / len(lengths))
    # stopwords kept: "the" is counted as well
    assert c.stats["tokens_with_stopwords"]["max"] == 3 * 7


def test_repeated_load_is_identical(tmp_path):
    p = tmp_path / "c.csv"
    write_corpus_csv(p, [("a", 1, "Cells divided quickly!"), ("b", 2, "Growth, rates; vary.")])
    a = load_corpus(p)
    b = load_corpus(p)
    assert [d.tokens for d in a] == [d.tokens for d in b]


def test_corpus_invariants():
    from conftest import make_doc

    with pytest.raises(ValidationError):
        Corpus([make_doc("a", 1)], 1)
    with pytest.raises(ValidationError):
        Corpus([make_doc("a", 3)], 2)
