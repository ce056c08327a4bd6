import math

import numpy as np
import pytest
from scipy import special
from scipy import stats as sps

from utilrank.stats import betainc, paired_ttest, t_sf_two_sided


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (4.5, 0.5), (1.0, 3.0), (20.0, 0.5), (150.0, 0.5)])
def test_betainc_matches_scipy(a, b):
    for x in np.linspace(0.0, 1.0, 41):
        assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


def test_t_tail_matches_scipy():
    for df in (1, 2, 5, 9, 30, 299):
        for t in (0.0, 0.3, 1.0, 2.262, 3.0, 8.0, -4.0):
            assert t_sf_two_sided(t, df) == pytest.approx(2 * sps.t.sf(abs(t), df), abs=1e-12)


def test_toy_alternating_differences():
    a = [1, 0] * 5
    b = [0] * 10
    r = paired_ttest(a, b)
    assert r.df == 9
    assert r.t_statistic == pytest.approx(3.0, abs=1e-12)
    assert r.p_value < 0.05 and r.significant_at_5pct
    assert r.p_value == pytest.approx(sps.ttest_rel(a, b).pvalue, abs=1e-12)


def test_identical_systems():
    x = [0.2, 0.9, 0.0, 1.0]
    r = paired_ttest(x, x)
    assert r.p_value == 1.0 and not r.significant_at_5pct


def test_constant_nonzero_difference():
    r = paired_ttest([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    assert r.p_value == 0.0 and math.isinf(r.t_statistic) and r.t_statistic > 0


def test_random_pairs_match_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 60))
        a = rng.uniform(size=n)
        b = a + rng.normal(0.05, 0.3, size=n)
        ours = paired_ttest(a, b)
        ref = sps.ttest_rel(a, b)
        assert ours.t_statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        paired_ttest([1, 2], [1])
    with pytest.raises(ValueError):
        paired_ttest([1], [0])
