from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from utilrank.features import NUM_FEATURES, read_feature_file


@dataclass
class QueryGroup:
    """Candidates of one query, rows kept in first-stage retrieval order."""

    query_id: str
    doc_ids: list[str]
    features: np.ndarray  # (rows, 14)
    grades: np.ndarray
    utilities: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, NUM_FEATURES)
        self.grades = np.asarray(self.grades, dtype=np.int64)
        if self.utilities is None:
            self.utilities = self.grades.astype(np.float64)
        self.utilities = np.asarray(self.utilities, dtype=np.float64)
        n = len(self.doc_ids)
        if n == 0:
            raise ValueError(f"query group {self.query_id!r} has no rows")
        if not (self.features.shape[0] == self.grades.shape[0] == self.utilities.shape[0] == n):
            raise ValueError(f"query group {self.query_id!r}: row counts disagree")

    def __len__(self):
        return len(self.doc_ids)


@dataclass
class RankingDataset:
    groups: list[QueryGroup]

    def __len__(self):
        return len(self.groups)

    @property
    def num_rows(self) -> int:
        return sum(len(g) for g in self.groups)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All feature rows and their group number."""
        if not self.groups:
            return np.zeros((0, NUM_FEATURES)), np.zeros(0, dtype=np.int64)
        X = np.vstack([g.features for g in self.groups])
        gid = np.repeat(np.arange(len(self.groups)), [len(g) for g in self.groups])
        return X, gid

    def padded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(grades, mask, flat positions) padded to the longest group."""
        L = max(len(g) for g in self.groups)
        G = len(self.groups)
        grades = np.zeros((G, L), dtype=np.int64)
        mask = np.zeros((G, L), dtype=bool)
        for k, g in enumerate(self.groups):
            grades[k, :len(g)] = g.grades
            mask[k, :len(g)] = True
        return grades, mask, np.flatnonzero(mask.ravel())

    def split(self, fraction: float, seed: int) -> tuple["RankingDataset", "RankingDataset"]:
        """Seeded by-query split; returns (train, held-out) with ``fraction`` held out."""
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self.groups))
        n_held = int(round(len(self.groups) * fraction))
        held = set(order[:n_held].tolist())
        train = [g for i, g in enumerate(self.groups) if i not in held]
        test = [g for i, g in enumerate(self.groups) if i in held]
        return RankingDataset(train), RankingDataset(test)


def top_k_by_utility(group: QueryGroup, k: int) -> QueryGroup:
    """Keep the ``k`` rows with highest utility (ties by retrieval order)."""
    keep = np.sort(np.lexsort((np.arange(len(group)), -group.utilities))[:k])
    return QueryGroup(group.query_id, [group.doc_ids[i] for i in keep], group.features[keep],
                      group.grades[keep], group.utilities[keep])


def dataset_from_rows(rows: Sequence[tuple[int, str, str, np.ndarray]],
                      utilities: dict[tuple[str, str], float] | None = None,
                      g_max: int = 4) -> RankingDataset:
    """Group feature-file rows by query, preserving first-appearance order.

    Without explicit ``utilities`` the utility of a row is ``grade / g_max``.
    """
    buckets: dict[str, list] = {}
    for label, qid, did, x in rows:
        buckets.setdefault(qid, []).append((label, did, x))
    groups = []
    for qid, items in buckets.items():
        dids = [d for _, d, _ in items]
        grades = [lab for lab, _, _ in items]
        if utilities is not None:
            utils = [utilities[(qid, d)] for d in dids]
        else:
            utils = [lab / g_max for lab in grades]
        groups.append(QueryGroup(qid, dids, np.array([x for _, _, x in items]), grades, utils))
    return RankingDataset(groups)


def load_dataset(path, utilities=None, g_max: int = 4) -> RankingDataset:
    return dataset_from_rows(read_feature_file(path), utilities, g_max)
