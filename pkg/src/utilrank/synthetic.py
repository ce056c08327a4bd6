"""Offline test collections.

``make_fact_corpus`` plants one ``fact(subject -> answer)`` document per query
among lexically stronger distractors, so that relevance order often pushes
the only useful document out of the top k while the mock generator still
rewards it. ``make_monotone_dataset`` is a ranking dataset whose grades
depend on the BM25 feature alone.
"""

from __future__ import annotations

import numpy as np

from utilrank.corpus import Document, Query
from utilrank.features import NUM_FEATURES
from utilrank.reranker.dataset import QueryGroup, RankingDataset

_ONSETS = list("bdfgklmnprstvz") + ["br", "dr", "gl", "kr", "pl", "st", "tr", "sk"]
_VOWELS = list("aeiou") + ["ai", "ou", "ei"]
_RESERVED = {"what", "is", "the", "secret", "word", "of", "fact", "i", "do", "not", "know"}
BM25_FEATURE = 11  # zero-based column of the BM25 score


class _Words:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used = set(_RESERVED)

    def fresh(self, syllables: int) -> str:
        while True:
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS)
                        for _ in range(syllables))
            if w not in self.used:
                self.used.add(w)
                return w


def make_fact_corpus(num_train: int = 200, num_test: int = 100, docs_per_query: int = 10,
                     hard_fraction: float = 0.6, context_size: int = 5, filler_vocab: int = 300,
                     seed: int = 42) -> tuple[list[Document], list[Query], list[Query]]:
    """Corpus plus train/test queries answerable only from their fact document.

    For a ``hard_fraction`` of queries at least ``context_size`` distractors
    outscore the fact document under BM25.
    """
    rng = np.random.default_rng(seed)
    words = _Words(rng)
    filler = [words.fresh(2) for _ in range(filler_vocab)]

    def fill(n):
        return list(rng.choice(filler, size=n))

    docs: list[Document] = []
    queries: list[Query] = []
    n_distract = docs_per_query - 1
    total = num_train + num_test
    hard = np.zeros(total, dtype=bool)
    hard[:int(round(hard_fraction * total))] = True
    rng.shuffle(hard)
    for qn in range(total):
        subject, answer = words.fresh(3), words.fresh(3)
        if hard[qn]:
            n_strong = int(rng.integers(context_size, n_distract + 1))
        else:
            n_strong = int(rng.integers(0, min(context_size, n_distract + 1)))
        texts = []
        body = fill(int(rng.integers(36, 45)))
        body.insert(len(body) // 2, f"fact({subject} -> {answer})")
        texts.append(" ".join(body))
        for j in range(n_distract):
            if j < n_strong:
                body = fill(int(rng.integers(18, 26)))
                for _ in range(int(rng.integers(3, 5))):
                    body.insert(int(rng.integers(0, len(body) + 1)), subject)
            else:
                body = fill(int(rng.integers(55, 65)))
                body.insert(int(rng.integers(0, len(body) + 1)), subject)
            texts.append(" ".join(body))
        slots = rng.permutation(docs_per_query)
        for text, slot in zip(texts, slots):
            docs.append(Document.from_text(f"d{qn:04d}-{slot:02d}", text))
        queries.append(Query.from_text(f"q{qn:04d}", f"what is the secret word of {subject}?",
                                       [answer]))
    return docs, queries[:num_train], queries[num_train:]


def make_monotone_dataset(num_queries: int = 500, docs_per_query: int = 10, g_max: int = 4,
                          seed: int = 0) -> RankingDataset:
    """Random features; each grade is a step function of the BM25 column only."""
    rng = np.random.default_rng(seed)
    groups = []
    for qn in range(num_queries):
        X = rng.uniform(0.0, 10.0, size=(docs_per_query, NUM_FEATURES))
        X[:, BM25_FEATURE] = rng.uniform(0.0, 20.0, size=docs_per_query)
        grades = np.minimum(g_max, (X[:, BM25_FEATURE] // (20.0 / (g_max + 1))).astype(int))
        groups.append(QueryGroup(f"q{qn}", [f"q{qn}-d{j}" for j in range(docs_per_query)],
                                 X, grades, grades / g_max))
    return RankingDataset(groups)
