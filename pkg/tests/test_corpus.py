import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utilrank.corpus import (
    Document, Query, bm25_score, build_index, idf, load_index, retrieve, save_index,
    split_passages, tokenize,
)


def docs_from(texts):
    return [Document.from_text(f"d{i}", t) for i, t in enumerate(texts)]


@pytest.mark.parametrize("text,expected", [
    ("", []),
    ("The President Roosevelt!", ["the", "president", "roosevelt"]),
    ("who wrote who?", ["who", "wrote", "who"]),
    ("tab\tand nbsp, semi;colon", ["tab", "and", "nbsp", "semi", "colon"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


@given(st.text())
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks


def test_build_index_counts():
    idx = build_index([Document.from_text("1", "a"), Document.from_text("2", "a"),
                       Document.from_text("3", "b")])
    assert idx.doc_freq == {"a": 2, "b": 1}
    assert idx.avg_doc_len == 1.0
    assert idx.num_docs == 3
    assert idx.postings_list("a") == [("1", 1), ("2", 1)]


def test_empty_corpus_retrieves_nothing():
    idx = build_index([])
    assert idx.num_docs == 0
    assert retrieve(idx, Query.from_text("q", "anything"), 10) == []


def test_duplicate_doc_id_rejected():
    with pytest.raises(ValueError, match="'x'"):
        build_index([Document.from_text("x", "a"), Document.from_text("x", "b")])


def test_idf_hand_values():
    idx = build_index(docs_from(["cat sat", "dog ran"]))
    assert idf(idx, "cat") == pytest.approx(math.log(2), abs=1e-12)
    assert idf(idx, "unseen") == pytest.approx(math.log(6), abs=1e-12)


def test_idf_positive_for_ubiquitous_term():
    idx = build_index(docs_from(["common"] * 1000))
    assert 0 < idf(idx, "common") < 1e-3


def test_bm25_hand_example():
    idx = build_index(docs_from(["cat sat", "dog ran"]))
    q = Query.from_text("q", "cat")
    assert bm25_score(idx, q, "d0") == pytest.approx(math.log(2), abs=1e-12)
    assert bm25_score(idx, q, "d1") == 0.0


def test_bm25_unknown_doc():
    idx = build_index(docs_from(["a"]))
    with pytest.raises(KeyError):
        bm25_score(idx, Query.from_text("q", "a"), "nope")


def test_retrieve_only_positive_scores():
    idx = build_index(docs_from(["apple pie", "apple tart", "pear"]))
    hits = retrieve(idx, Query.from_text("q", "apple"), 10)
    assert [d for d, _ in hits] == ["d0", "d1"]


def test_retrieve_ties_by_doc_id():
    idx = build_index([Document.from_text("b", "x y"), Document.from_text("a", "x y")])
    assert [d for d, _ in retrieve(idx, Query.from_text("q", "x"), 2)] == ["a", "b"]


def test_retrieve_rejects_nonpositive_n():
    idx = build_index(docs_from(["a"]))
    with pytest.raises(ValueError):
        retrieve(idx, Query.from_text("q", "a"), 0)


WORDS = st.sampled_from(list("abcdefgh"))
CORPORA = st.lists(st.lists(WORDS, max_size=12).map(" ".join), min_size=1, max_size=50)


@settings(max_examples=60, deadline=None)
@given(CORPORA, st.lists(WORDS, min_size=1, max_size=5).map(" ".join))
def test_retrieve_matches_linear_scan(texts, qtext):
    idx = build_index(docs_from(texts))
    q = Query.from_text("q", qtext)
    scan = [(d, bm25_score(idx, q, d)) for d in idx.doc_ids]
    scan = sorted([s for s in scan if s[1] > 0], key=lambda t: (-t[1], t[0]))
    got = retrieve(idx, q, len(texts))
    assert [d for d, _ in got] == [d for d, _ in scan]
    assert [s for _, s in got] == pytest.approx([s for _, s in scan], abs=1e-12)
    scores = [s for _, s in got]
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    for n in range(1, len(texts)):
        assert retrieve(idx, q, n) == retrieve(idx, q, n + 1)[:n]


@settings(max_examples=60, deadline=None)
@given(CORPORA, WORDS, st.integers(0, 49))
def test_tf_monotone(texts, term, which):
    """One more occurrence of a query term never lowers a score on a fixed index."""
    idx = build_index(docs_from(texts))
    which %= len(texts)
    base = idx.documents[f"d{which}"]
    more = Document(base.doc_id, base.text, base.tokens + (term,))
    # Score the extended document against the same collection statistics.
    idx.documents[base.doc_id] = more
    idx.doc_lengths[base.doc_id] += 1
    q = Query.from_text("q", term)
    after = bm25_score(idx, q, base.doc_id)
    idx.documents[base.doc_id] = base
    idx.doc_lengths[base.doc_id] -= 1
    assert after >= bm25_score(idx, q, base.doc_id) >= 0.0


@given(st.integers(1, 500), st.data())
def test_idf_nonincreasing_in_df(n, data):
    df1 = data.draw(st.integers(0, n))
    df2 = data.draw(st.integers(df1, n))
    idx = build_index([])
    idx.num_docs = n
    idx.doc_freq = {"x": df1, "y": df2}
    assert idf(idx, "x") >= idf(idx, "y") > 0


def test_index_round_trip(tmp_path):
    idx = build_index(docs_from(["cat sat", "dog ran", ""]))
    save_index(idx, tmp_path / "i.json")
    back = load_index(tmp_path / "i.json")
    assert back.doc_ids == idx.doc_ids
    assert back.doc_freq == idx.doc_freq
    assert back.avg_doc_len == idx.avg_doc_len


def test_index_bad_magic(tmp_path):
    (tmp_path / "i.json").write_text('{"magic": "nope"}')
    with pytest.raises(ValueError):
        load_index(tmp_path / "i.json")


def test_split_passages():
    doc = Document.from_text("w", " ".join(f"t{i}" for i in range(250)))
    parts = split_passages(doc, 100)
    assert [p.doc_id for p in parts] == ["w-0", "w-1", "w-2"]
    assert [len(p.tokens) for p in parts] == [100, 100, 50]
