"""Closed-form probability bounds from repulsing supermartingales, and the
verdicts built on them.

With ``alpha = exp(eps*m0/(c+eps)**2)`` and ``gamma = exp(-eps**2/(2*(c+eps)**2))``
the probability that the supermartingale is still nonnegative after ``n``
steps is at most ``alpha * gamma**n`` and the probability of ever reaching
the repelled set is at most ``alpha * gamma**A / (1 - gamma)`` with
``A = ceil(|m0| / c)``.  Exponents are kept as exact rationals; only the
final ``exp``/``log`` happen in floating point, and every returned bound is
nudged upwards so rounding never under-reports.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

__all__ = [
    "PreconditionViolated",
    "REL_MARGIN",
    "REPORT_FLOOR",
    "azuma_tail",
    "azuma_tails",
    "first_nonempty_step",
    "log_azuma_tail",
    "log_reach_bound",
    "reach_bound",
]

#: Relative upward margin applied to every floating-point bound.
REL_MARGIN = 1e-9
_TINY = 5e-324
#: Reachability bounds are never reported below this; it absorbs the
#: subnormal floors of up to ~1e20 summed tail terms.
REPORT_FLOOR = 1e-300


class PreconditionViolated(ValueError):
    pass


def _check(eps, c, m0) -> tuple[Fraction, Fraction, Fraction]:
    eps, c, m0 = Fraction(eps), Fraction(c), Fraction(m0)
    if eps <= 0:
        raise PreconditionViolated(f"eps must be positive, got {eps}")
    if c <= 0:
        raise PreconditionViolated(f"c must be positive, got {c}")
    if m0 >= 0:
        raise PreconditionViolated(f"m0 must be negative, got {m0}")
    return eps, c, m0


def _log_alpha(eps: Fraction, c: Fraction, m0: Fraction) -> Fraction:
    return eps * m0 / (c + eps) ** 2


def _log_gamma(eps: Fraction, c: Fraction) -> Fraction:
    return -(eps**2) / (2 * (c + eps) ** 2)


def first_nonempty_step(c, m0) -> int:
    """``A = ceil(|m0| / c)``, exactly."""
    q = -Fraction(m0) / Fraction(c)
    return -((-q.numerator) // q.denominator)


def _upward(log_p: float, margin: float = REL_MARGIN) -> float:
    p = math.exp(log_p) * (1 + margin) + _TINY
    return min(1.0, p)


def log_azuma_tail(eps, c, m0, n: int) -> float:
    """Natural log of the unrounded tail bound ``alpha * gamma**n``."""
    eps, c, m0 = _check(eps, c, m0)
    if n < 0:
        raise PreconditionViolated(f"n must be nonnegative, got {n}")
    return float(_log_alpha(eps, c, m0) + n * _log_gamma(eps, c))


def azuma_tail(eps, c, m0, n: int) -> float:
    """Upper bound on the probability that the process has not yet been
    repelled after ``n`` steps."""
    return _upward(log_azuma_tail(eps, c, m0, n))


def azuma_tails(eps, c, m0, ns) -> np.ndarray:
    """Vectorized :func:`azuma_tail` over an integer array of step counts.

    The exponent is assembled in double precision; for ``|n log gamma|``
    up to ``1e6`` its absolute error stays near ``1e-10``, well inside the
    upward margin.
    """
    eps, c, m0 = _check(eps, c, m0)
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size and ns.min() < 0:
        raise PreconditionViolated("step counts must be nonnegative")
    log_p = float(_log_alpha(eps, c, m0)) + ns.astype(np.float64) * float(_log_gamma(eps, c))
    p = np.exp(log_p) * (1 + REL_MARGIN) + _TINY
    return np.minimum(p, 1.0)


def log_reach_bound(eps, c, m0) -> float:
    """Natural log of the unclamped reachability bound."""
    eps, c, m0 = _check(eps, c, m0)
    a = first_nonempty_step(c, m0)
    exponent = _log_alpha(eps, c, m0) + a * _log_gamma(eps, c)
    # log(1 - gamma) via expm1 keeps precision when gamma is close to 1.
    log_one_minus_gamma = math.log(-math.expm1(float(_log_gamma(eps, c))))
    return float(exponent) - log_one_minus_gamma


def reach_bound(eps, c, m0, *, clamp: bool = True) -> float:
    """Upper bound on the probability of ever reaching the repelled set.

    The margin is twice the per-step one so that a sum of individually
    rounded :func:`azuma_tail` terms can never overtake it.
    """
    p = max(math.exp(log_reach_bound(eps, c, m0)) * (1 + 2 * REL_MARGIN), REPORT_FLOOR)
    return min(1.0, p) if clamp else p
