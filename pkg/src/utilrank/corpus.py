"""Documents, tokenization, inverted index and BM25 first-stage retrieval."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from utilrank import FORMAT_VERSION

INDEX_MAGIC = "UTILRANK-INDEX"

# Anything that is not a letter or digit separates terms.
_SPLIT = re.compile(r"[\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split on whitespace and punctuation.

    >>> tokenize("The President Roosevelt!")
    ['the', 'president', 'roosevelt']
    """
    return [t for t in _SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    tokens: tuple[str, ...] = ()

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        if not doc_id:
            raise ValueError("doc_id must be non-empty")
        return cls(doc_id, text, tuple(tokenize(text)))


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    tokens: tuple[str, ...] = ()
    gold_answers: tuple[str, ...] = ()

    @classmethod
    def from_text(cls, query_id: str, text: str, gold_answers: Iterable[str] = ()) -> "Query":
        if not query_id:
            raise ValueError("query_id must be non-empty")
        return cls(query_id, text, tuple(tokenize(text)), tuple(gold_answers))


@dataclass
class Index:
    """Immutable inverted index over a document collection.

    ``postings`` maps a term to ``(doc positions, term frequencies)`` arrays,
    positions referring to ``doc_ids``. Use :func:`build_index` to construct.
    """

    documents: dict[str, Document]
    doc_ids: list[str]
    doc_lengths: dict[str, int]
    doc_freq: dict[str, int]
    postings: dict[str, tuple[np.ndarray, np.ndarray]]
    num_docs: int
    avg_doc_len: float
    k1: float = 1.2
    b: float = 0.75
    _lengths: np.ndarray = field(default=None, repr=False)
    _position: dict[str, int] = field(default=None, repr=False)

    def postings_list(self, term: str) -> list[tuple[str, int]]:
        if term not in self.postings:
            return []
        pos, tf = self.postings[term]
        return [(self.doc_ids[p], int(f)) for p, f in zip(pos, tf)]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.documents

    def document(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise KeyError(f"unknown doc_id {doc_id!r}") from None


def build_index(docs: Sequence[Document], k1: float = 1.2, b: float = 0.75) -> Index:
    documents: dict[str, Document] = {}
    for doc in docs:
        if doc.doc_id in documents:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        documents[doc.doc_id] = doc

    doc_ids = list(documents)
    lengths = np.array([len(documents[d].tokens) for d in doc_ids], dtype=np.float64)
    accum: dict[str, tuple[list[int], list[int]]] = {}
    for pos, doc_id in enumerate(doc_ids):
        counts: dict[str, int] = {}
        for tok in documents[doc_id].tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term, tf in counts.items():
            p, f = accum.setdefault(term, ([], []))
            p.append(pos)
            f.append(tf)

    postings = {t: (np.array(p, dtype=np.int64), np.array(f, dtype=np.float64))
                for t, (p, f) in accum.items()}
    num_docs = len(doc_ids)
    return Index(
        documents=documents,
        doc_ids=doc_ids,
        doc_lengths={d: int(n) for d, n in zip(doc_ids, lengths)},
        doc_freq={t: len(p) for t, (p, _) in accum.items()},
        postings=postings,
        num_docs=num_docs,
        avg_doc_len=float(lengths.mean()) if num_docs else 0.0,
        k1=k1,
        b=b,
        _lengths=lengths,
        _position={d: i for i, d in enumerate(doc_ids)},
    )


def idf(index: Index, term: str) -> float:
    """Robertson IDF with the +1 floor, always positive."""
    df = index.doc_freq.get(term, 0)
    return math.log((index.num_docs - df + 0.5) / (df + 0.5) + 1.0)


def _term_weights(index: Index, term: str) -> tuple[np.ndarray, np.ndarray]:
    pos, tf = index.postings[term]
    if index.avg_doc_len > 0:
        norm = 1.0 - index.b + index.b * index._lengths[pos] / index.avg_doc_len
    else:
        norm = np.ones_like(tf)
    return pos, idf(index, term) * tf * (index.k1 + 1.0) / (tf + index.k1 * norm)


def bm25_score(index: Index, q: Query, doc_id: str) -> float:
    if doc_id not in index._position:
        raise KeyError(f"unknown doc_id {doc_id!r}")
    doc = index.documents[doc_id]
    tf_doc: dict[str, int] = {}
    for tok in doc.tokens:
        tf_doc[tok] = tf_doc.get(tok, 0) + 1
    length = index.doc_lengths[doc_id]
    score = 0.0
    for term in dict.fromkeys(q.tokens):
        tf = tf_doc.get(term, 0)
        if tf == 0:
            continue
        if index.avg_doc_len > 0:
            norm = 1.0 - index.b + index.b * length / index.avg_doc_len
        else:
            norm = 1.0
        score += idf(index, term) * tf * (index.k1 + 1.0) / (tf + index.k1 * norm)
    return score


def score_all(index: Index, q: Query) -> np.ndarray:
    """BM25 score of every indexed document, aligned with ``index.doc_ids``."""
    scores = np.zeros(index.num_docs)
    for term in dict.fromkeys(q.tokens):
        if term in index.postings:
            pos, w = _term_weights(index, term)
            scores[pos] += w
    return scores


def retrieve(index: Index, q: Query, n: int) -> list[tuple[str, float]]:
    """Top ``n`` positively scoring documents; ties go to the smaller doc_id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = score_all(index, q)
    hits = np.flatnonzero(scores > 0)
    ranked = sorted(hits.tolist(), key=lambda p: (-scores[p], index.doc_ids[p]))
    return [(index.doc_ids[p], float(scores[p])) for p in ranked[:n]]


def split_passages(doc: Document, words: int = 100) -> list[Document]:
    """Cut a document into consecutive non-overlapping passages of ``words`` words."""
    parts = doc.text.split()
    out = []
    for i in range(0, len(parts), words):
        out.append(Document.from_text(f"{doc.doc_id}-{i // words}", " ".join(parts[i:i + words])))
    return out


def read_corpus(path: str | Path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                docs.append(Document.from_text(str(obj["doc_id"]), obj["text"]))
    return docs


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"doc_id": d.doc_id, "text": d.text}, ensure_ascii=False) + "\n")


def save_index(index: Index, path: str | Path) -> None:
    # Postings are rebuilt on load, so only the documents and parameters are stored.
    payload = {
        "magic": INDEX_MAGIC,
        "version": FORMAT_VERSION,
        "k1": index.k1,
        "b": index.b,
        "documents": [{"doc_id": d, "text": index.documents[d].text} for d in index.doc_ids],
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def load_index(path: str | Path) -> Index:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("magic") != INDEX_MAGIC:
        raise ValueError(f"{path}: not an index file")
    if payload.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported index version {payload.get('version')}")
    docs = [Document.from_text(d["doc_id"], d["text"]) for d in payload["documents"]]
    return build_index(docs, k1=payload["k1"], b=payload["b"])
