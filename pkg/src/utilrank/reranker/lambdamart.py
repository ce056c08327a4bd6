from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from utilrank.features import NUM_FEATURES
from utilrank.reranker.dataset import RankingDataset
from utilrank.reranker.ndcg import batch_lambdas, ndcg
from utilrank.reranker.trees import RegressionTree, fit_tree

log = logging.getLogger(__name__)

# Upper bound on groups * rows**2 handled in one vectorized lambda pass.
_PAIR_BUDGET = 4_000_000


@dataclass
class LambdaMARTConfig:
    num_trees: int = 300
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_rows_per_leaf: int = 1
    sigma: float = 1.0
    sigma_outer: bool = True
    ndcg_cutoff: int = 5
    early_stop_rounds: int = 30
    seed: int = 42


@dataclass
class TreeEnsemble:
    trees: list[RegressionTree]
    learning_rate: float
    sigma: float
    feature_gain: np.ndarray = field(default_factory=lambda: np.zeros(NUM_FEATURES))
    g_max: int = 4
    config: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out


def mean_ndcg(data: RankingDataset, scores_by_group: list[np.ndarray], cutoff: int) -> float:
    vals = []
    for g, s in zip(data.groups, scores_by_group):
        order = np.lexsort((np.arange(len(g)), -s))
        vals.append(ndcg(g.grades[order].tolist(), cutoff))
    return float(np.mean(vals)) if vals else 0.0


def _split_scores(data: RankingDataset, flat: np.ndarray) -> list[np.ndarray]:
    bounds = np.cumsum([0] + [len(g) for g in data.groups])
    return [flat[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _gradients(scores, grades, mask, positions, cfg):
    G, L = grades.shape
    chunk = max(1, _PAIR_BUDGET // (L * L))
    lam = np.zeros((G, L))
    hess = np.zeros((G, L))
    for a in range(0, G, chunk):
        lam[a:a + chunk], hess[a:a + chunk] = batch_lambdas(
            scores[a:a + chunk], grades[a:a + chunk], mask[a:a + chunk],
            cfg.sigma, cfg.ndcg_cutoff, cfg.sigma_outer)
    return lam.ravel()[positions], hess.ravel()[positions]


def train_lambdamart(data: RankingDataset, config: LambdaMARTConfig | None = None,
                     validation: RankingDataset | None = None, g_max: int = 4,
                     history: list | None = None) -> TreeEnsemble:
    """Gradient-boosted trees fit to LambdaRank gradients of NDCG@cutoff.

    When ``validation`` is given, training stops after ``early_stop_rounds``
    rounds without validation NDCG improvement and is truncated to the best
    round. ``history`` collects ``(round, train_ndcg, valid_ndcg)`` tuples.
    """
    cfg = config or LambdaMARTConfig()
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if cfg.num_trees < 1 or cfg.learning_rate <= 0 or cfg.max_leaves < 2 or cfg.sigma <= 0:
        raise ValueError("num_trees, learning_rate, max_leaves and sigma must be positive")

    X, _ = data.stacked()
    grades, mask, positions = data.padded()
    G, L = grades.shape
    model = TreeEnsemble([], cfg.learning_rate, cfg.sigma, np.zeros(NUM_FEATURES), g_max,
                         config=dict(vars(cfg)))

    if all(np.all(g.grades == g.grades[0]) for g in data.groups):
        warnings.warn("all grades are equal within every query; returning the zero ensemble",
                      RuntimeWarning, stacklevel=2)
        return model

    Xv = validation.stacked()[0] if validation is not None and len(validation) else None
    flat = np.zeros(X.shape[0])
    vflat = np.zeros(Xv.shape[0]) if Xv is not None else None
    best_valid, best_round, best_gain = -np.inf, 0, model.feature_gain.copy()

    for rnd in range(1, cfg.num_trees + 1):
        padded = np.zeros(G * L)
        padded[positions] = flat
        lam, hess = _gradients(padded.reshape(G, L), grades, mask, positions, cfg)
        if not np.any(lam):
            log.info("round %d: all lambdas vanished, stopping", rnd)
            break
        tree = fit_tree(X, lam, hess, cfg.max_leaves, cfg.min_rows_per_leaf, model.feature_gain)
        model.trees.append(tree)
        flat += cfg.learning_rate * tree.predict(X)

        if history is not None or Xv is not None:
            train_ndcg = mean_ndcg(data, _split_scores(data, flat), cfg.ndcg_cutoff)
            valid_ndcg = None
            if Xv is not None:
                vflat += cfg.learning_rate * tree.predict(Xv)
                valid_ndcg = mean_ndcg(validation, _split_scores(validation, vflat), cfg.ndcg_cutoff)
            if history is not None:
                history.append((rnd, train_ndcg, valid_ndcg))
            if valid_ndcg is not None:
                if valid_ndcg > best_valid:
                    best_valid, best_round, best_gain = valid_ndcg, rnd, model.feature_gain.copy()
                elif rnd - best_round >= cfg.early_stop_rounds:
                    log.info("early stop at round %d (best %d, ndcg %.4f)", rnd, best_round, best_valid)
                    break

    if Xv is not None and best_round:
        del model.trees[best_round:]
        model.feature_gain = best_gain
    return model


def feature_importance(model: TreeEnsemble) -> list[tuple[int, float]]:
    """Gain shares per feature (1-based index), largest first."""
    gain = np.asarray(model.feature_gain, dtype=np.float64)
    total = gain.sum()
    if total <= 0:
        warnings.warn("model has no splits; reporting uniform importance", RuntimeWarning,
                      stacklevel=2)
        share = np.full(gain.size, 1.0 / gain.size)
    else:
        share = gain / total
    order = np.lexsort((np.arange(gain.size), -share))
    return [(int(i) + 1, float(share[i])) for i in order]
