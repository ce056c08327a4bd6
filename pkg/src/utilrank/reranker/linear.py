"""Linear scorer trained on the rank-weighted pairwise logistic loss.

For every pair with ``U_i > U_j`` in a query the loss adds
``(1/r_i - 1/r_j) * log(1 + exp(s_j - s_i))`` where ``r`` is the rank
induced by utility (ties resolved by first-stage order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from utilrank.features import NUM_FEATURES
from utilrank.reranker.dataset import RankingDataset
from utilrank.reranker.lambdamart import _split_scores, mean_ndcg


@dataclass
class LinearConfig:
    learning_rate: float = 0.5
    epochs: int = 300
    seed: int = 42
    early_stop_rounds: int = 30
    ndcg_cutoff: int = 5


@dataclass
class LinearRanker:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.mean) / self.std

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.standardize(X) @ self.weights + self.bias


@dataclass
class PairSet:
    """Flattened preference pairs: ``hi`` should outscore ``lo`` with weight ``w``."""

    hi: np.ndarray
    lo: np.ndarray
    w: np.ndarray


def utility_ranks(utilities: np.ndarray) -> np.ndarray:
    """1-based strict ranks by descending utility, ties by row order."""
    order = np.lexsort((np.arange(utilities.size), -utilities))
    r = np.empty(utilities.size, dtype=np.int64)
    r[order] = np.arange(1, utilities.size + 1)
    return r


def build_pairs(data: RankingDataset) -> PairSet:
    hi, lo, w = [], [], []
    offset = 0
    for g in data.groups:
        u = g.utilities
        r = utility_ranks(u)
        i, j = np.nonzero(u[:, None] > u[None, :])
        hi.append(i + offset)
        lo.append(j + offset)
        w.append(1.0 / r[i] - 1.0 / r[j])
        offset += len(g)
    if not hi:
        return PairSet(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    return PairSet(np.concatenate(hi), np.concatenate(lo), np.concatenate(w))


def pairwise_loss(weights: np.ndarray, Z: np.ndarray, pairs: PairSet, bias: float = 0.0) -> float:
    """Loss summed over all queries for standardized features ``Z``."""
    s = Z @ weights + bias
    return float(np.sum(pairs.w * np.logaddexp(0.0, s[pairs.lo] - s[pairs.hi])))


def pairwise_loss_grad(weights: np.ndarray, Z: np.ndarray, pairs: PairSet,
                       bias: float = 0.0) -> np.ndarray:
    """Gradient of :func:`pairwise_loss` with respect to ``weights``.

    The bias cancels in every score difference, so its gradient is zero.
    """
    s = Z @ weights + bias
    d = s[pairs.lo] - s[pairs.hi]
    coef = pairs.w * np.exp(-np.logaddexp(0.0, -d))  # w * sigmoid(d)
    return (coef[:, None] * (Z[pairs.lo] - Z[pairs.hi])).sum(axis=0)


def train_linear_ranker(data: RankingDataset, config: LinearConfig | None = None,
                        validation: RankingDataset | None = None) -> LinearRanker:
    cfg = config or LinearConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, _ = data.stacked()
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    rng = np.random.default_rng(cfg.seed)
    model = LinearRanker(rng.normal(0.0, 0.01, NUM_FEATURES), 0.0, mean, std)

    pairs = build_pairs(data)
    if pairs.w.size == 0:
        return model
    Z = model.standardize(X)
    Zv = model.standardize(validation.stacked()[0]) if validation is not None and len(validation) else None
    best = (-np.inf, model.weights.copy())
    stale = 0
    step = cfg.learning_rate / len(data)
    for _ in range(cfg.epochs):
        model.weights = model.weights - step * pairwise_loss_grad(model.weights, Z, pairs)
        if Zv is not None:
            v = mean_ndcg(validation, _split_scores(validation, Zv @ model.weights), cfg.ndcg_cutoff)
            if v > best[0]:
                best, stale = (v, model.weights.copy()), 0
            else:
                stale += 1
                if stale >= cfg.early_stop_rounds:
                    break
    if Zv is not None:
        model.weights = best[1]
    return model
