"""Replication statistics: Student-t intervals, Welch and paired t-tests.

The t distribution is computed here from the regularized incomplete beta
function (Lentz continued fraction); no scipy dependency at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class InsufficientDataError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidenceInterval:
    mean: float
    half_width: float
    alpha: float
    n: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    df: float
    p_value: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student-t with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def t_cdf(t: float, df: float) -> float:
    if df <= 0:
        raise DomainError("df must be positive")
    if t * t < df:
        # near the centre the central mass form avoids cancellation
        central = betainc(0.5, df / 2.0, t * t / (df + t * t))
        return 0.5 + math.copysign(0.5 * central, t)
    tail = 0.5 * t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


def t_quantile(p: float, df: float) -> float:
    """Inverse Student-t CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if df <= 0:
        raise DomainError("df must be positive")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        lo, hi = hi, hi * 2.0
    # bisection to bracket tightly, then a few Newton polish steps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    v = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return m, v


def mean_ci(samples: Sequence[float], alpha: float = 0.05) -> ConfidenceInterval:
    xs = list(samples)
    n = len(xs)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    m, v = _mean_var(xs)
    hw = t_quantile(1.0 - alpha / 2.0, n - 1) * math.sqrt(v / n)
    return ConfidenceInterval(m, hw, alpha, n)


def welch_t(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """Two-sided Welch test with Welch-Satterthwaite degrees of freedom."""
    a, b = list(a), list(b)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientDataError("each sample needs at least 2 values")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    if se2 == 0.0:
        if ma == mb:
            return TTestResult(0.0, float(len(a) + len(b) - 2), 1.0, alpha)
        return TTestResult(math.copysign(math.inf, ma - mb), float(len(a) + len(b) - 2), 0.0, alpha)
    t = (ma - mb) / math.sqrt(se2)
    # Welch-Satterthwaite, written in variance shares so tiny variances cannot underflow
    fa, fb = sa / se2, sb / se2
    df = 1.0 / (fa * fa / (len(a) - 1) + fb * fb / (len(b) - 1))
    return TTestResult(t, df, t_sf_two_sided(t, df), alpha)


def paired_t(diffs: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """One-sample two-sided t-test of mean(diffs) == 0.

    All-equal differences are reported exactly: p=1 when they are all zero,
    p=0 otherwise.
    """
    d = list(diffs)
    n = len(d)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 differences, got {n}")
    m, v = _mean_var(d)
    if v == 0.0:
        if m == 0.0:
            return TTestResult(0.0, float(n - 1), 1.0, alpha)
        return TTestResult(math.copysign(math.inf, m), float(n - 1), 0.0, alpha)
    t = m / math.sqrt(v / n)
    return TTestResult(t, float(n - 1), t_sf_two_sided(t, n - 1), alpha)
