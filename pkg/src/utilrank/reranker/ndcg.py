"""NDCG, pair-swap deltas and LambdaRank gradients."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _discounts(n: int, cutoff: int) -> np.ndarray:
    pos = np.arange(1, n + 1)
    return np.where(pos <= cutoff, 1.0 / np.log2(pos + 1.0), 0.0)


def dcg(grades: Sequence[int], cutoff: int) -> float:
    """DCG of grades listed in rank order, exponential gain ``2**g - 1``."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    g = np.asarray(grades, dtype=np.float64)[:cutoff]
    return float(np.sum((2.0 ** g - 1.0) / np.log2(np.arange(2, g.size + 2))))


def ideal_dcg(grades: Sequence[int], cutoff: int) -> float:
    return dcg(sorted(grades, reverse=True), cutoff)


def ndcg(grades: Sequence[int], cutoff: int) -> float:
    """NDCG of a ranked grade list; 1.0 when no grade is positive."""
    best = ideal_dcg(grades, cutoff)
    if best == 0.0:
        return 1.0
    return dcg(grades, cutoff) / best


def delta_ndcg(grades: Sequence[int], ranks: Sequence[int], i: int, j: int, cutoff: int) -> float:
    """|NDCG change| from swapping rows ``i`` and ``j``.

    ``ranks`` holds each row's current 1-based rank position.
    """
    best = ideal_dcg(grades, cutoff)
    if best == 0.0:
        return 0.0

    def disc(r):
        return 1.0 / np.log2(r + 1.0) if r <= cutoff else 0.0

    gain = abs(2.0 ** grades[i] - 2.0 ** grades[j])
    return float(gain * abs(disc(ranks[i]) - disc(ranks[j])) / best)


def current_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based rank of every row when sorted by score, ties by row order."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def _pair_terms(scores, grades, mask, sigma, cutoff, sigma_outer):
    # (G, L, L) pair weights for the lambda and hessian sums; nonzero only
    # where row i has the higher grade than row j.
    G, L = scores.shape
    s = np.where(mask, scores, -np.inf)
    order = np.argsort(-s, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, L + 1)[None, :].repeat(G, 0), axis=1)
    disc = np.where(ranks <= cutoff, 1.0 / np.log2(ranks + 1.0), 0.0)

    g = np.where(mask, grades, 0).astype(np.float64)
    ideal = -np.sort(-g, axis=1)
    idcg = ((2.0 ** ideal - 1.0) * _discounts(L, cutoff)[None, :]).sum(axis=1)
    inv_idcg = np.divide(1.0, idcg, out=np.zeros_like(idcg), where=idcg > 0)

    gain = 2.0 ** g
    delta = (np.abs(gain[:, :, None] - gain[:, None, :])
             * np.abs(disc[:, :, None] - disc[:, None, :])
             * inv_idcg[:, None, None])
    prefer = (g[:, :, None] > g[:, None, :]) & mask[:, :, None] & mask[:, None, :]

    diff = np.where(mask, scores, 0.0)
    x = sigma * (diff[:, :, None] - diff[:, None, :])
    rho = np.exp(-np.logaddexp(0.0, x))  # 1 / (1 + e^x)
    outer = sigma if sigma_outer else 1.0
    w = np.where(prefer, outer * rho * delta, 0.0)
    hw = np.where(prefer, outer * sigma * rho * (1.0 - rho) * delta, 0.0)
    return w, hw, np.where(prefer, delta, 0.0)


def batch_lambdas(scores: np.ndarray, grades: np.ndarray, mask: np.ndarray, sigma: float,
                  cutoff: int, sigma_outer: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Lambdas and hessians for a padded batch of query groups.

    All arrays are ``(groups, max_rows)``; ``mask`` flags real rows. The sign
    convention makes a positive lambda mean "raise this score".
    """
    w, hw, _ = _pair_terms(scores, grades, mask, sigma, cutoff, sigma_outer)
    lambdas = w.sum(axis=2) - w.sum(axis=1)
    hessians = hw.sum(axis=2) + hw.sum(axis=1)
    return lambdas, hessians


def pair_lambdas(grades: Sequence[int], scores: Sequence[float], sigma: float = 1.0,
                 cutoff: int = 5, sigma_outer: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair lambda magnitudes and swap deltas for one group.

    Entry ``[i, j]`` is set only when row ``i`` outranks row ``j`` by grade; it
    is added to lambda ``i`` and subtracted from lambda ``j``.
    """
    s = np.asarray(scores, dtype=np.float64)[None, :]
    g = np.asarray(grades)[None, :]
    w, _, delta = _pair_terms(s, g, np.ones_like(s, dtype=bool), sigma, cutoff, sigma_outer)
    return w[0], delta[0]


def lambda_pairs(grades: Sequence[int], scores: Sequence[float], sigma: float = 1.0,
                 cutoff: int = 5, sigma_outer: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-document lambdas and hessians for a single query group."""
    s = np.asarray(scores, dtype=np.float64)[None, :]
    g = np.asarray(grades)[None, :]
    lam, hess = batch_lambdas(s, g, np.ones_like(s, dtype=bool), sigma, cutoff, sigma_outer)
    return lam[0], hess[0]
