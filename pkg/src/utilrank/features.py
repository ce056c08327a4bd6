"""The 14 query-document features used by the rerankers, and the feature-file format."""

from __future__ import annotations

import hashlib
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from utilrank.corpus import Document, Index, Query, bm25_score, idf
from utilrank.topics import TopicModel, infer_theta, top_topic_coverage, topic_cosine

NUM_FEATURES = 14

FEATURE_NAMES = (
    "query_len",
    "query_distinct",
    "query_idf_min",
    "query_idf_max",
    "query_idf_mean",
    "doc_len",
    "doc_distinct",
    "doc_idf_min",
    "doc_idf_max",
    "doc_idf_mean",
    "overlap",
    "bm25",
    "topic_cosine",
    "topic_coverage",
)


def derive_seed(*parts: str, base: int = 0) -> int:
    """Stable 63-bit seed from string parts; independent of PYTHONHASHSEED."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(base).encode())
    for p in parts:
        h.update(b"\x1f" + p.encode("utf-8"))
    return int.from_bytes(h.digest(), "little") >> 1


def idf_stats(index: Index, tokens: Sequence[str]) -> tuple[float, float, float]:
    """(min, max, mean) IDF over the distinct terms of ``tokens``; zeros when empty.

    Aggregating over distinct terms rather than positions is a deliberate
    choice; switching to positional weighting only requires changing this.
    """
    terms = dict.fromkeys(tokens)
    if not terms:
        return 0.0, 0.0, 0.0
    vals = [idf(index, t) for t in terms]
    return min(vals), max(vals), sum(vals) / len(vals)


class TopicCache:
    """Memoizes fold-in topic distributions for queries and documents.

    Query distributions are seeded from the query id and document
    distributions from the doc id, so every (q, d) pair sees the same values
    regardless of extraction order.
    """

    def __init__(self, model: TopicModel, fold_in_iterations: int = 50, seed: int = 42):
        self.model = model
        self.fold_in_iterations = fold_in_iterations
        self.seed = seed
        self.query_theta = lru_cache(maxsize=4096)(self._query_theta)
        self.doc_theta = lru_cache(maxsize=65536)(self._doc_theta)

    def _query_theta(self, query_id: str, tokens: tuple[str, ...]) -> np.ndarray:
        s = derive_seed("q", query_id, base=self.seed)
        return infer_theta(self.model, tokens, self.fold_in_iterations, s)

    def _doc_theta(self, doc_id: str, tokens: tuple[str, ...]) -> np.ndarray:
        s = derive_seed("d", doc_id, base=self.seed)
        return infer_theta(self.model, tokens, self.fold_in_iterations, s)


def extract_features(index: Index, topics: TopicModel | TopicCache, q: Query, d: Document,
                     a: int = 20) -> np.ndarray:
    if isinstance(topics, TopicModel):
        topics = TopicCache(topics)
    q_terms = set(q.tokens)
    d_terms = set(d.tokens)
    theta_q = topics.query_theta(q.query_id, q.tokens)
    theta_d = topics.doc_theta(d.doc_id, d.tokens)
    return np.array([
        len(q.tokens),
        len(q_terms),
        *idf_stats(index, q.tokens),
        len(d.tokens),
        len(d_terms),
        *idf_stats(index, d.tokens),
        len(q_terms & d_terms),
        bm25_score(index, q, d.doc_id),
        topic_cosine(theta_q, theta_d),
        top_topic_coverage(theta_q, theta_d, a),
    ], dtype=np.float64)


def batch_extract(index: Index, topics: TopicModel | TopicCache, q: Query,
                  doc_ids: Sequence[str], a: int = 20) -> list[tuple[str, np.ndarray]]:
    if isinstance(topics, TopicModel):
        topics = TopicCache(topics)
    missing = [d for d in doc_ids if d not in index]
    if missing:
        raise KeyError(f"unknown doc_id {missing[0]!r}")
    return [(d, extract_features(index, topics, q, index.document(d), a)) for d in doc_ids]


# -- feature files -----------------------------------------------------------

def format_row(label: int, query_id: str, doc_id: str, x: np.ndarray) -> str:
    feats = " ".join(f"{i}:{float(v)!r}" for i, v in enumerate(x, start=1))
    return f"{label} qid:{query_id} {feats} #{doc_id}"


def write_feature_file(rows: Iterable[tuple[int, str, str, np.ndarray]], path: str | Path) -> None:
    """Write ``(label, query_id, doc_id, features)`` rows, one line each."""
    with open(path, "w", encoding="utf-8") as fh:
        for label, qid, did, x in rows:
            fh.write(format_row(label, qid, did, x) + "\n")


def read_feature_file(path: str | Path) -> list[tuple[int, str, str, np.ndarray]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            body, _, doc_id = line.partition("#")
            parts = body.split()
            if len(parts) < 2 or not parts[1].startswith("qid:"):
                raise ValueError(f"{path}:{lineno}: malformed feature line")
            x = np.zeros(NUM_FEATURES)
            for tok in parts[2:]:
                k, _, v = tok.partition(":")
                i = int(k)
                if not 1 <= i <= NUM_FEATURES:
                    raise ValueError(f"{path}:{lineno}: feature index {i} out of range")
                x[i - 1] = float(v)
            rows.append((int(float(parts[0])), parts[1][4:], doc_id.strip(), x))
    return rows
