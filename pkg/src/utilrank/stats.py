"""Paired two-sided Student t-test with a self-contained t distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 3e-16) -> float:
    # Lentz's continued fraction for the incomplete beta function.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(0.5 * df, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    df: int

    @property
    def significant_at_5pct(self) -> bool:
        return self.p_value < 0.05


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test of ``a - b``.

    When all differences are equal the statistic is degenerate: the result is
    ``p = 1`` for a zero difference and ``p = 0`` otherwise.
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if d.ndim != 1 or np.asarray(b).shape != np.asarray(a).shape:
        raise ValueError("paired samples must be 1-d and of equal length")
    n = d.size
    if n < 2:
        raise ValueError("need at least two pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or np.all(d == d[0]):
        if mean == 0.0:
            return TTestResult(0.0, 1.0, n - 1)
        return TTestResult(math.copysign(math.inf, mean), 0.0, n - 1)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_sf_two_sided(t, n - 1), n - 1)
