import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utilrank.reranker.ndcg import current_ranks, dcg, delta_ndcg, lambda_pairs, ndcg

LOG2_3 = math.log2(3)


def brute_ndcg_by_rows(grades, order, cutoff):
    """NDCG straight from the definition for rows listed in ``order``."""
    ranked = [grades[i] for i in order]
    gains = [(2 ** g - 1) / math.log2(k + 2) for k, g in enumerate(ranked[:cutoff])]
    ideal = sorted(grades, reverse=True)
    igains = [(2 ** g - 1) / math.log2(k + 2) for k, g in enumerate(ideal[:cutoff])]
    return 1.0 if sum(igains) == 0 else sum(gains) / sum(igains)


def brute_delta(grades, scores, i, j, cutoff):
    order = list(np.argsort(-np.asarray(scores), kind="stable"))
    before = brute_ndcg_by_rows(grades, order, cutoff)
    pi, pj = order.index(i), order.index(j)
    order[pi], order[pj] = order[pj], order[pi]
    return abs(brute_ndcg_by_rows(grades, order, cutoff) - before)


def test_dcg_examples():
    assert dcg([4], 1) == 15.0
    assert dcg([0, 0, 0], 3) == 0.0
    assert dcg([3, 1], 2) == pytest.approx(7 + 1 / LOG2_3, abs=1e-12)
    assert dcg([3, 1], 2) == pytest.approx(7.6309, abs=1e-4)
    with pytest.raises(ValueError):
        dcg([1], 0)


def test_ndcg_examples():
    assert ndcg([3, 2, 2, 0], 4) == 1.0
    assert ndcg([0, 0, 0], 2) == 1.0
    assert ndcg([1, 3], 2) == pytest.approx((1 + 7 / LOG2_3) / (7 + 1 / LOG2_3), abs=1e-12)
    assert ndcg([1, 3], 2) == pytest.approx(0.7098, abs=1e-4)


def test_delta_examples():
    assert delta_ndcg([2, 2], [1, 2], 0, 1, 2) == 0.0
    # both rows beyond the cutoff
    assert delta_ndcg([3, 0, 1, 2], [1, 2, 3, 4], 2, 3, 2) == 0.0
    expected = 7 * (1 - 1 / LOG2_3) / 7
    assert delta_ndcg([3, 0], [1, 2], 0, 1, 2) == pytest.approx(expected, abs=1e-12)
    assert delta_ndcg([3, 0], [1, 2], 0, 1, 2) == pytest.approx(0.3691, abs=1e-4)


def test_lambda_examples():
    lam, _ = lambda_pairs([2, 2, 2], [0.3, -1.0, 2.0])
    np.testing.assert_array_equal(lam, 0.0)
    lam, _ = lambda_pairs([3, 0], [0.0, 0.0], sigma=1.0, cutoff=2)
    d = 1 - 1 / LOG2_3
    np.testing.assert_allclose(lam, [d / 2, -d / 2], atol=1e-12)
    assert lam[0] == pytest.approx(0.18455, abs=1e-4)


def naive_lambdas(grades, scores, sigma, cutoff, sigma_outer=True):
    """Pair-by-pair accumulation with brute-force swap deltas."""
    n = len(grades)
    lam = np.zeros(n)
    hess = np.zeros(n)
    outer = sigma if sigma_outer else 1.0
    for i in range(n):
        for j in range(n):
            if grades[i] > grades[j]:
                d = brute_delta(grades, scores, i, j, cutoff)
                rho = 1.0 / (1.0 + math.exp(sigma * (scores[i] - scores[j])))
                lam[i] += outer * rho * d
                lam[j] -= outer * rho * d
                h = outer * sigma * rho * (1 - rho) * d
                hess[i] += h
                hess[j] += h
    return lam, hess


GROUPS = st.integers(1, 10).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 4), min_size=n, max_size=n),
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=n, max_size=n)))


@settings(max_examples=200, deadline=None)
@given(GROUPS, st.integers(1, 10), st.floats(0.2, 3.0), st.booleans())
def test_lambdas_match_naive(group, cutoff, sigma, outer):
    grades, scores = group
    lam, hess = lambda_pairs(grades, scores, sigma, cutoff, outer)
    ref_lam, ref_hess = naive_lambdas(grades, scores, sigma, cutoff, outer)
    np.testing.assert_allclose(lam, ref_lam, atol=1e-12)
    np.testing.assert_allclose(hess, ref_hess, atol=1e-12)
    assert abs(lam.sum()) < 1e-9


@settings(max_examples=200, deadline=None)
@given(GROUPS, st.integers(1, 10))
def test_delta_matches_bruteforce(group, cutoff):
    grades, scores = group
    ranks = current_ranks(scores)
    for i in range(len(grades)):
        for j in range(len(grades)):
            if i != j:
                assert delta_ndcg(grades, ranks, i, j, cutoff) == pytest.approx(
                    brute_delta(grades, scores, i, j, cutoff), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=10), st.integers(1, 10))
def test_ndcg_bounds_and_optimum(grades, cutoff):
    v = ndcg(grades, cutoff)
    assert 0.0 <= v <= 1.0 + 1e-12
    assert ndcg(sorted(grades, reverse=True), cutoff) == pytest.approx(1.0)


def test_pair_magnitude_decreases_with_margin():
    mags = [lambda_pairs([3, 0], [m, 0.0], 1.0, 2)[0][0] for m in np.linspace(-4, 4, 17)]
    assert all(m > 0 for m in mags)
    assert all(a > b for a, b in zip(mags, mags[1:]))


def test_hessian_is_negative_lambda_slope():
    rng = np.random.default_rng(3)
    grades = rng.integers(0, 5, 8)
    scores = rng.normal(size=8)
    lam, hess = lambda_pairs(grades, scores, 1.3, 5)
    eps = 1e-7
    for i in range(8):
        up, down = scores.copy(), scores.copy()
        up[i] += eps
        down[i] -= eps
        slope = (lambda_pairs(grades, up, 1.3, 5)[0][i] - lambda_pairs(grades, down, 1.3, 5)[0][i]) / (2 * eps)
        assert slope == pytest.approx(-hess[i], abs=1e-6)
