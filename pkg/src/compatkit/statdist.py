"""Scalar distribution functions: standard normal and chi-square tails.

The chi-square tail is computed from the regularized incomplete gamma
function, using the power series below ``x = a + 1`` and a modified Lentz
continued fraction above it.  Normal functions wrap :func:`math.erfc` and
:class:`statistics.NormalDist`, which stay accurate far into the tails.
"""

from __future__ import annotations

import math
import sys
from statistics import NormalDist

import numpy as np

from compatkit.errors import ConvergenceError, InvalidInputError

__all__ = [
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "log_std_normal_sf",
    "regularized_gamma_p",
    "regularized_gamma_q",
    "log_regularized_gamma_q",
    "chi2_upper_tail",
    "chi2_log_upper_tail",
    "normal_cdf_array",
    "normal_quantile_array",
]

_SQRT2 = math.sqrt(2.0)
_EPS = sys.float_info.epsilon
_TINY = sys.float_info.min / _EPS
_MAX_ITER = 10_000
_STD_NORMAL = NormalDist()


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _require_finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidInputError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_cdf(z: float) -> float:
    """Standard normal distribution function Phi(z)."""
    z = _require_finite(z, "z")
    return _clamp01(0.5 * math.erfc(-z / _SQRT2))


def std_normal_sf(z: float) -> float:
    """Upper tail 1 - Phi(z), computed without cancellation."""
    z = _require_finite(z, "z")
    return _clamp01(0.5 * math.erfc(z / _SQRT2))


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise InvalidInputError(f"quantile requires 0 < p < 1, got {p!r}")
    return _STD_NORMAL.inv_cdf(p)


def _gamma_series(a: float, x: float) -> float:
    # sum_{n>=0} x^n / (a (a+1) ... (a+n)); P(a, x) = prefactor * sum
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total
    raise ConvergenceError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a: float, x: float) -> float:
    # Lentz evaluation of the continued fraction for Q(a, x) / prefactor
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _log_prefactor(a: float, x: float) -> float:
    return -x + a * math.log(x) - math.lgamma(a)


def _check_gamma_args(a: float, x: float) -> tuple[float, float]:
    a = float(a)
    x = float(x)
    if not (a > 0.0 and math.isfinite(a)):
        raise InvalidInputError(f"shape must be positive and finite, got {a!r}")
    if math.isnan(x) or x < 0.0:
        raise InvalidInputError(f"argument must be nonnegative, got {x!r}")
    return a, x


def regularized_gamma_p(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _clamp01(math.exp(_log_prefactor(a, x)) * _gamma_series(a, x))
    return _clamp01(1.0 - math.exp(_log_prefactor(a, x)) * _gamma_cf(a, x))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x)."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return _clamp01(1.0 - math.exp(_log_prefactor(a, x)) * _gamma_series(a, x))
    return _clamp01(math.exp(_log_prefactor(a, x)) * _gamma_cf(a, x))


def log_regularized_gamma_q(a: float, x: float) -> float:
    """Natural log of Q(a, x); finite even where Q underflows."""
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < a + 1.0:
        p = math.exp(_log_prefactor(a, x)) * _gamma_series(a, x)
        return math.log1p(-min(p, 1.0)) if p < 1.0 else -math.inf
    return _log_prefactor(a, x) + math.log(_gamma_cf(a, x))


def _check_chi2(d: float, df: int) -> tuple[float, int]:
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise InvalidInputError(f"degrees of freedom must be a positive integer, got {df!r}")
    d = float(d)
    if math.isnan(d) or d < 0.0:
        raise InvalidInputError(f"chi-square statistic must be nonnegative, got {d!r}")
    return d, int(df)


def chi2_upper_tail(d: float, df: int) -> float:
    """Pr(X >= d) for X chi-square with ``df`` degrees of freedom.

    Examples
    --------
    >>> chi2_upper_tail(0.0, 3)
    1.0
    >>> round(chi2_upper_tail(8.0, 2), 7)
    0.0183156
    """
    d, df = _check_chi2(d, df)
    return regularized_gamma_q(0.5 * df, 0.5 * d)


def chi2_log_upper_tail(d: float, df: int) -> float:
    """Natural log of :func:`chi2_upper_tail`, usable past float underflow."""
    d, df = _check_chi2(d, df)
    return log_regularized_gamma_q(0.5 * df, 0.5 * d)


def log_std_normal_sf(z: float) -> float:
    """log(1 - Phi(z)).

    For large positive z the tail goes through the chi-square(1) log tail,
    since 1 - Phi(z) = Pr(X >= z^2) / 2 there.
    """
    z = float(z)
    if math.isnan(z):
        raise InvalidInputError("z must not be NaN")
    if z == math.inf:
        return -math.inf
    if z < 5.0:
        return math.log(0.5 * math.erfc(z / _SQRT2))
    return math.log(0.5) + chi2_log_upper_tail(z * z, 1)


_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)
_inv_cdf_ufunc = np.frompyfunc(_STD_NORMAL.inv_cdf, 1, 1)


def normal_cdf_array(z) -> np.ndarray:
    """Elementwise Phi for an array; same arithmetic as :func:`std_normal_cdf`."""
    z = np.asarray(z, dtype=float)
    return np.clip(0.5 * _erfc_ufunc(-z / _SQRT2).astype(float), 0.0, 1.0)


def normal_quantile_array(u) -> np.ndarray:
    """Elementwise inverse Phi for values strictly inside (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise InvalidInputError("quantile requires 0 < u < 1")
    return _inv_cdf_ufunc(u).astype(float)
