"""Corpus data model, JSONL round-trips, validation, synthetic generation."""

import json

import pytest

from citemap.corpus import (
    Corpus,
    SyntheticSpec,
    ValidationError,
    generate_synthetic_corpus,
    is_self_citation,
    load_corpus,
    planted_topic,
    save_corpus,
    validate_corpus,
)
from conftest import FIXTURE_CORPUS, make_doc, ref


def test_from_documents_builds_index(hand_corpus):
    assert len(hand_corpus) == 3
    assert hand_corpus.get("d2").venue == "J"
    assert [d.id for d in hand_corpus] == ["d1", "d2", "d3"]


def test_duplicate_id_rejected():
    docs = [make_doc("d1"), make_doc("d1")]
    with pytest.raises(ValidationError, match="d1"):
        Corpus.from_documents(docs)


def test_self_reference_rejected():
    with pytest.raises(ValidationError, match="own id"):
        Corpus.from_documents([make_doc("d1", references=(ref("d1", intro=1),))])


def test_zero_count_reference_rejected():
    with pytest.raises(ValidationError, match="zero"):
        Corpus.from_documents([make_doc("d1", references=(ref("d2"),))])


def test_negative_count_rejected():
    with pytest.raises(ValidationError):
        Corpus.from_documents([make_doc("d1", references=(ref("d2", intro=-1, results=2),))])


def test_duplicate_reference_pair_rejected():
    refs = (ref("d2", intro=1), ref("d2", results=1))
    with pytest.raises(ValidationError, match="duplicate reference"):
        Corpus.from_documents([make_doc("d1", references=refs)])


def test_year_bounds():
    with pytest.raises(ValidationError, match="year"):
        Corpus.from_documents([make_doc("d1", year=1850)])
    with pytest.raises(ValidationError, match="year"):
        Corpus.from_documents([make_doc("d1", year=2150)])


def test_get_unknown_id_raises(hand_corpus):
    with pytest.raises(ValidationError, match="zzz"):
        hand_corpus.get("zzz")


def test_external_references(hand_corpus):
    assert hand_corpus.external_references() == {"dX"}
    assert hand_corpus.resolvable("d1")
    assert not hand_corpus.resolvable("dX")


def test_round_trip(tmp_path, hand_corpus):
    path = tmp_path / "c.jsonl"
    save_corpus(hand_corpus, str(path))
    again = load_corpus(str(path))
    assert len(again) == len(hand_corpus)
    for a, b in zip(hand_corpus, again):
        assert a == b


def test_save_is_deterministic(tmp_path, hand_corpus):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(hand_corpus, str(p1))
    save_corpus(hand_corpus, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = {
        "id": "d1", "title": "t", "abstract": "a", "authors": [], "year": 2000,
        "venue": "v", "fields": [], "categories": [], "labels": [], "references": [],
    }
    path.write_text(json.dumps(good) + "\n" + "{not json\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 2"):
        load_corpus(str(path))


def test_load_missing_key(tmp_path):
    rec = {
        "id": "d1", "title": "t", "abstract": "a", "authors": [], "year": 2000,
        "venue": "v", "fields": [], "categories": [], "labels": [],
    }
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rec) + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="references"):
        load_corpus(str(path))


def test_strict_rejects_unknown_keys_lenient_ignores(tmp_path):
    rec = {
        "id": "d1", "title": "t", "abstract": "a", "authors": [], "year": 2000,
        "venue": "v", "fields": [], "categories": [], "labels": [], "references": [],
        "extra_key": 1,
    }
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rec) + "\n", encoding="utf-8")
    corpus = load_corpus(str(path))  # lenient: ignored
    assert len(corpus) == 1
    with pytest.raises(ValidationError, match="extra_key"):
        load_corpus(str(path), strict=True)


def test_validate_corpus_reports(hand_corpus):
    report = validate_corpus(hand_corpus)
    assert report.unresolved == [("d1", "dX")]
    assert not report.empty_title and not report.empty_abstract
    assert not report.is_clean  # the unresolved reference


def test_validate_flags_empty_abstract():
    corpus = Corpus.from_documents([make_doc("d1", abstract="")])
    report = validate_corpus(corpus)
    assert report.empty_abstract == ["d1"]


def test_self_citation():
    a = make_doc("a", authors=("A1", "A2"))
    b = make_doc("b", authors=("A2", "A3"))
    c = make_doc("c", authors=("A4",))
    empty = make_doc("e", authors=())
    assert is_self_citation(a, b) and is_self_citation(b, a)
    assert not is_self_citation(a, c)
    assert not is_self_citation(empty, a)


# --- synthetic generator ----------------------------------------------------


def test_synthetic_shape_and_labels():
    corpus = generate_synthetic_corpus(SyntheticSpec(topics=4, docs_per_topic=50), seed=7)
    assert len(corpus) == 200
    topics = {planted_topic(d) for d in corpus}
    assert len(topics) == 4
    for doc in corpus:
        assert doc.labels == (planted_topic(doc),)
        assert planted_topic(doc) in doc.categories


def test_synthetic_determinism(tmp_path):
    spec = SyntheticSpec(topics=3, docs_per_topic=20)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(generate_synthetic_corpus(spec, seed=5), str(a))
    save_corpus(generate_synthetic_corpus(spec, seed=5), str(b))
    assert a.read_bytes() == b.read_bytes()
    save_corpus(generate_synthetic_corpus(spec, seed=6), str(b))
    assert a.read_bytes() != b.read_bytes()


def test_synthetic_zero_intra_rate():
    corpus = generate_synthetic_corpus(SyntheticSpec(topics=2, docs_per_topic=10, intra_refs=0), seed=1)
    for doc in corpus:
        for r in doc.references:
            # all remaining references are perfunctory intro-only mentions
            assert r.count_results == 0 and r.count_discussion == 0 and r.count_methods == 0


def test_synthetic_correlation_rule():
    """Substantive references score higher sections than perfunctory ones."""
    corpus = generate_synthetic_corpus(SyntheticSpec(topics=3, docs_per_topic=30), seed=2)
    for doc in corpus:
        substantive = [r for r in doc.references if r.count_results > 0]
        noise = [r for r in doc.references if r.count_results == 0]
        assert len(substantive) == 7 and len(noise) == 3
        for r in substantive:
            assert planted_topic(corpus.get(r.cited_id)) == planted_topic(doc)
        for r in noise:
            assert r.count_intro >= 1


def test_synthetic_infeasible_spec():
    with pytest.raises(ValidationError, match="infeasible"):
        generate_synthetic_corpus(SyntheticSpec(topics=2, docs_per_topic=5, intra_refs=10), seed=0)


def test_committed_fixture_matches_generator(tmp_path):
    """The committed corpus file is exactly generator output (4 topics x 250 docs, seed 7)."""
    corpus = generate_synthetic_corpus(SyntheticSpec(topics=4, docs_per_topic=250), seed=7)
    regenerated = tmp_path / "regen.jsonl"
    save_corpus(corpus, str(regenerated))
    with open(FIXTURE_CORPUS, "rb") as fh:
        assert regenerated.read_bytes() == fh.read()
