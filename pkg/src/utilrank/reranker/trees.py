"""Least-squares regression trees grown best-first, with Newton leaf values."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

LEAF = -1
DAMPING = 1e-9


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[i] == LEAF`` marks a leaf holding ``value[i]``.

    A row goes left when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_leaves: int

    @property
    def num_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "max_leaves": self.max_leaves,
            "nodes": [[int(f), float(t), int(l), int(r), float(v)] for f, t, l, r, v in
                      zip(self.feature, self.threshold, self.left, self.right, self.value)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        nodes = d["nodes"]
        cols = list(zip(*nodes)) if nodes else [(), (), (), (), ()]
        return cls(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.float64),
                   np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.int64),
                   np.array(cols[4], dtype=np.float64), int(d["max_leaves"]))


def _best_split(X, grad, rows, min_rows):
    """Best (gain, feature, threshold, left_rows, right_rows) for a node, or None."""
    n = rows.size
    if n < 2 * min_rows:
        return None
    Xn = X[rows]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    gs = grad[rows][order]
    csum = np.cumsum(gs, axis=0)[:-1]
    total = csum[-1] + gs[-1] if n > 1 else gs[0]
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    gain = csum ** 2 / n_left + (total - csum) ** 2 / n_right - total ** 2 / n
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_rows) & (n_right >= min_rows)
    gain = np.where(valid, gain, -np.inf)
    # Row-major argmax over the transpose: lowest feature wins ties, then lowest cut.
    flat = int(np.argmax(gain.T))
    f, pos = divmod(flat, n - 1)
    best = gain[pos, f]
    if not np.isfinite(best) or best <= 1e-12:
        return None
    thr = 0.5 * (xs[pos, f] + xs[pos + 1, f])
    if thr >= xs[pos + 1, f]:  # midpoint rounded up onto the right value
        thr = xs[pos, f]
    left = rows[order[:pos + 1, f]]
    right = rows[order[pos + 1:, f]]
    return float(best), int(f), float(thr), np.sort(left), np.sort(right)


def fit_tree(X: np.ndarray, grad: np.ndarray, hess: np.ndarray, max_leaves: int = 31,
             min_rows_per_leaf: int = 1, feature_gain: np.ndarray | None = None) -> RegressionTree:
    """Fit one tree to ``grad`` with variance-reduction splits.

    Leaves expand best-gain-first until ``max_leaves``; leaf values are the
    Newton step ``sum(grad) / (sum(hess) + damping)``. Split gains are added
    to ``feature_gain`` in place when given.
    """
    feature, threshold, left, right, value = [LEAF], [0.0], [-1], [-1], [0.0]
    leaf_rows = {0: np.arange(X.shape[0])}
    heap = []
    counter = 0

    def push(node):
        nonlocal counter
        split = _best_split(X, grad, leaf_rows[node], min_rows_per_leaf)
        if split is not None:
            heapq.heappush(heap, (-split[0], counter, node, split))
            counter += 1

    push(0)
    leaves = 1
    while heap and leaves < max_leaves:
        _, _, node, (gain, f, thr, lrows, rrows) = heapq.heappop(heap)
        ln, rn = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
        feature[node], threshold[node], left[node], right[node] = f, thr, ln, rn
        del leaf_rows[node]
        leaf_rows[ln], leaf_rows[rn] = lrows, rrows
        if feature_gain is not None:
            feature_gain[f] += gain
        leaves += 1
        push(ln)
        push(rn)

    for node, rows in leaf_rows.items():
        value[node] = float(grad[rows].sum() / (hess[rows].sum() + DAMPING))
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                          np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                          np.array(value), max_leaves)
