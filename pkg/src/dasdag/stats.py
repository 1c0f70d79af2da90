"""Small statistical kernel: incomplete beta, t and F tails, Welch and nested F tests."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, InvalidDegreesOfFreedom, InvalidDof, ValidationError, ZeroVariancePair

CF_EPS = 1e-14
CF_MAX_ITER = 10_000
_TINY = 1e-300

GREATER = "one-sided-greater"
TWO_SIDED = "two-sided"


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    dd = 1.0 - qab * x / qap
    if abs(dd) < _TINY:
        dd = _TINY
    dd = 1.0 / dd
    h = dd
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < _TINY:
            dd = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        dd = 1.0 / dd
        h *= dd * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < _TINY:
            dd = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValidationError(f"betainc_reg needs a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"betainc_reg needs 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _check_dof(dof: float):
    if not (dof > 0 and math.isfinite(dof)):
        raise InvalidDof(f"degrees of freedom must be positive and finite, got {dof}")


def student_t_cdf(t: float, dof: float) -> float:
    _check_dof(dof)
    if math.isnan(t):
        raise ValidationError("t is NaN")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * betainc_reg(0.5 * dof, 0.5, dof / (dof + t * t))
    return 1.0 - tail if t > 0 else tail


def student_t_sf(t: float, dof: float) -> float:
    """Upper tail ``1 - cdf(t)``, computed without cancellation."""
    return student_t_cdf(-t, dof)


def f_sf(f: float, dfn: float, dfd: float) -> float:
    """Upper tail of the F distribution with ``(dfn, dfd)`` degrees of freedom."""
    _check_dof(dfn)
    _check_dof(dfd)
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_reg(0.5 * dfd, 0.5 * dfn, dfd / (dfd + dfn * f))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    dof: float
    p_value: float
    direction: str = GREATER
    zero_variance: bool = False

    __test__ = False  # not a pytest class


def welch_test(a, b, alternative: str = GREATER) -> TestResult:
    """Welch's unequal-variance two-sample t-test.

    With ``alternative="one-sided-greater"`` the alternative hypothesis is
    ``mean(a) > mean(b)``. When both samples have exactly zero variance a
    :class:`ZeroVariancePair` warning is issued and the p-value follows the
    limit convention (0.5 for equal means, else 0 or 1).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise InsufficientSamples(f"each sample needs >= 2 values, got {na} and {nb}")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if not (np.isfinite(va) and np.isfinite(vb)):
        raise ValidationError("samples must have finite variance")
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    diff = ma - mb
    if se2 == 0.0:
        warnings.warn("both samples have zero variance", ZeroVariancePair, stacklevel=2)
        if diff == 0:
            stat, p_greater = 0.0, 0.5
        else:
            stat = math.copysign(math.inf, diff)
            p_greater = 0.0 if diff > 0 else 1.0
        p = p_greater if alternative == GREATER else (1.0 if diff == 0 else 0.0)
        return TestResult(stat, float(na + nb - 2), p, alternative, zero_variance=True)
    stat = diff / math.sqrt(se2)
    dof = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    if alternative == GREATER:
        p = student_t_sf(stat, dof)
    elif alternative == TWO_SIDED:
        p = min(1.0, 2.0 * student_t_sf(abs(stat), dof))
    else:
        raise ValidationError(f"unknown alternative {alternative!r}")
    return TestResult(float(stat), float(dof), float(p), alternative)


def welch_one_sided(a, b) -> TestResult:
    """One-sided Welch test of ``mean(a) > mean(b)``."""
    return welch_test(a, b, GREATER)


def f_test_nested(rss_full: float, df_full: int, rss_reduced: float, df_reduced: int) -> float:
    """P-value of the F test comparing a reduced model nested in a full one.

    ``df_*`` are residual degrees of freedom, so ``df_reduced > df_full``.
    """
    if not (df_reduced > df_full > 0):
        raise InvalidDegreesOfFreedom(f"need df_reduced > df_full > 0, got {df_reduced} and {df_full}")
    if rss_full < 0 or rss_reduced < -1e-12:
        raise ValidationError("residual sums of squares must be non-negative")
    if rss_reduced < rss_full - 1e-12 * max(1.0, abs(rss_full)):
        raise ValidationError(f"reduced model fits better than the full one ({rss_reduced} < {rss_full})")
    num = max(rss_reduced - rss_full, 0.0) / (df_reduced - df_full)
    if num == 0.0:
        return 1.0
    if rss_full == 0.0:
        return 0.0
    return f_sf(num / (rss_full / df_full), df_reduced - df_full, df_full)
