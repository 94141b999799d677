"""Significance tests used by the experiment reports.

p-values come from the regularized incomplete beta function, evaluated by
its continued fraction (modified Lentz), so no statistics package is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateVariance, MarketError

__all__ = ["TestResult", "betainc", "f_sf", "t_sf_two_sided", "one_way_anova", "welch_t_test", "pooled_t_test"]

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F > f) of the F distribution."""
    if f <= 0:
        return 1.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| > |t|) for Student's t with ``df`` degrees of freedom."""
    return betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    pvalue: float
    df: tuple

    def __iter__(self):
        # unpacks as (statistic, pvalue)
        yield self.statistic
        yield self.pvalue


def _mean(xs):
    return math.fsum(xs) / len(xs)


def _ss(xs, m):
    return math.fsum((x - m) ** 2 for x in xs)


def one_way_anova(groups: Sequence[Sequence[float]]) -> TestResult:
    """Classical one-way ANOVA: F = between-group mean square / within-group mean square."""
    groups = [[float(x) for x in g] for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise MarketError("one-way ANOVA needs at least two groups of at least two samples")
    allx = [x for g in groups for x in g]
    grand = _mean(allx)
    ss_between = math.fsum(len(g) * (_mean(g) - grand) ** 2 for g in groups)
    ss_within = math.fsum(_ss(g, _mean(g)) for g in groups)
    df1, df2 = len(groups) - 1, len(allx) - len(groups)
    if ss_within == 0:
        raise DegenerateVariance("within-group variance is zero")
    F = (ss_between / df1) / (ss_within / df2)
    return TestResult(F, f_sf(F, df1, df2), (df1, df2))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Welch's unequal-variance t test, two-sided. Negative t means mean(a) < mean(b)."""
    a, b = [float(x) for x in a], [float(x) for x in b]
    if len(a) < 2 or len(b) < 2:
        raise MarketError("t test needs at least two samples per group")
    ma, mb = _mean(a), _mean(b)
    va, vb = _ss(a, ma) / (len(a) - 1), _ss(b, mb) / (len(b) - 1)
    qa, qb = va / len(a), vb / len(b)
    se2 = qa + qb
    if se2 == 0:
        raise DegenerateVariance("both samples have zero variance")
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (qa * qa / (len(a) - 1) + qb * qb / (len(b) - 1))
    return TestResult(t, t_sf_two_sided(t, df), (df,))


def pooled_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Student's equal-variance t test, two-sided."""
    a, b = [float(x) for x in a], [float(x) for x in b]
    if len(a) < 2 or len(b) < 2:
        raise MarketError("t test needs at least two samples per group")
    ma, mb = _mean(a), _mean(b)
    df = len(a) + len(b) - 2
    sp2 = (_ss(a, ma) + _ss(b, mb)) / df
    if sp2 == 0:
        raise DegenerateVariance("both samples have zero variance")
    t = (ma - mb) / math.sqrt(sp2 * (1.0 / len(a) + 1.0 / len(b)))
    return TestResult(t, t_sf_two_sided(t, df), (df,))
