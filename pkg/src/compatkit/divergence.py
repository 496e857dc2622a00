"""Divergences on the mean space and projections onto hypothesis regions.

Two divergence classes are provided:

* ``ssd(lam, theta, metric)``: squared standardized distance
  ``(lam - theta)' S^-1 (lam - theta)`` where ``S`` is a covariance evaluated
  at whichever point the caller names as the anchor.  Anchoring at the fitted
  mean gives Pearson-type statistics; anchoring at the data gives Neyman-type.
* ``deviance(theta, lam, family)``: twice the Kullback-Leibler divergence of
  the ``theta``-indexed distribution from the ``lam``-indexed one.

All linear algebra goes through a Cholesky factor of the metric; an explicit
inverse is never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from compatkit.errors import InvalidInputError, SingularError
from compatkit.families import GlmFamily

__all__ = [
    "MetricSpec",
    "DivergenceReport",
    "ssd",
    "deviance",
    "project_interval",
    "project_linear",
    "column_space_contains",
]

_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """Positive-definite covariance defining a squared distance.

    ``covariance`` may be a full matrix or a 1-D vector of variances (a
    diagonal metric).  ``anchor`` records which argument the covariance was
    evaluated at; it is carried for reporting only.
    """

    covariance: np.ndarray
    anchor: str = "theta"
    _chol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if cov.ndim == 1:
            if not np.all(np.isfinite(cov)) or np.any(cov <= 0):
                raise SingularError("diagonal metric needs strictly positive finite variances")
            object.__setattr__(self, "covariance", cov)
            object.__setattr__(self, "_chol", np.sqrt(cov))
            return
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise InvalidInputError(f"metric must be square, got shape {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise InvalidInputError("metric has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
            raise InvalidInputError("metric must be symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularError("metric is not positive definite") from exc
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def identity(cls, n: int) -> "MetricSpec":
        return cls(np.ones(n))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.covariance.ndim == 1

    def whiten(self, v) -> np.ndarray:
        """Return ``L^-1 v`` with ``L L' = covariance``; works on vectors or matrices."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.dim:
            raise InvalidInputError(f"dimension mismatch: metric is {self.dim}, argument is {v.shape[0]}")
        if self.is_diagonal:
            return v / (self._chol if v.ndim == 1 else self._chol[:, None])
        return linalg.solve_triangular(self._chol, v, lower=True)


@dataclass
class DivergenceReport:
    value: float
    minimizer: np.ndarray
    kind: str
    coefficients: np.ndarray | None = None


def _as_point(x, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return x


def ssd(lam, theta, metric: MetricSpec) -> float:
    """Squared standardized distance between two mean vectors.

    Examples
    --------
    >>> ssd([1.0, -1.0], [0.0, 0.0], MetricSpec.identity(2))
    2.0
    """
    lam = _as_point(lam, "lambda")
    theta = _as_point(theta, "theta")
    if lam.shape != theta.shape:
        raise InvalidInputError(f"dimension mismatch: {lam.shape[0]} vs {theta.shape[0]}")
    w = metric.whiten(lam - theta)
    return float(w @ w)


def deviance(theta, lam, family: GlmFamily) -> float:
    """Twice the Kullback-Leibler divergence of F(.; theta) from F(.; lam).

    ``theta`` must lie strictly inside the family's mean space; ``lam`` may
    sit on its closed boundary, with 0 * log(0) read as 0.
    """
    theta = family.validate_mean(theta, "theta")
    lam = _as_point(lam, "lambda")
    if lam.shape != theta.shape:
        raise InvalidInputError(f"dimension mismatch: {lam.shape[0]} vs {theta.shape[0]}")
    if family.kind == "gaussian":
        return ssd(lam, theta, MetricSpec(family.covariance))
    if family.kind == "poisson":
        if np.any(lam < 0):
            raise InvalidInputError("poisson lambda must be nonnegative")
        terms = special.xlogy(lam, lam / theta) - (lam - theta)
        return float(max(0.0, 2.0 * math.fsum(terms)))
    if np.any((lam < 0) | (lam > 1)):
        raise InvalidInputError("binomial lambda must lie in [0, 1]")
    t = family.weights(lam.shape[0])
    terms = special.xlogy(lam, lam / theta) + special.xlogy(1.0 - lam, (1.0 - lam) / (1.0 - theta))
    return float(max(0.0, 2.0 * math.fsum(t * terms)))


def project_interval(x: float, lo: float = -math.inf, hi: float = math.inf) -> float:
    """Closest point to ``x`` in ``[lo, hi]`` (either end may be infinite)."""
    x, lo, hi = float(x), float(lo), float(hi)
    if math.isnan(x) or math.isnan(lo) or math.isnan(hi):
        raise InvalidInputError("projection arguments must not be NaN")
    if lo > hi:
        raise InvalidInputError(f"empty interval: lo={lo} > hi={hi}")
    return min(max(x, lo), hi)


def _whitened_lstsq(y: np.ndarray, design: np.ndarray, metric: MetricSpec):
    wx = metric.whiten(design)
    wy = metric.whiten(y)
    q, r = np.linalg.qr(wx)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or np.min(diag) <= _RANK_TOL * max(1.0, float(np.max(diag))):
        raise SingularError("design matrix is rank deficient under the metric")
    beta = linalg.solve_triangular(r, q.T @ wy, lower=False)
    return beta, wx, wy


def project_linear(y, design, metric: MetricSpec) -> DivergenceReport:
    """Orthogonal projection of ``y`` onto span(design) under the metric.

    Returns the projected point ``X b`` with ``b`` solving the weighted
    normal equations, and ``ssd(y, X b, metric)`` as the divergence.
    """
    y = _as_point(y, "y")
    x = np.asarray(design, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"design has {x.shape[0]} rows but y has length {y.shape[0]}")
    if x.shape[1] > x.shape[0]:
        raise SingularError("design has more columns than rows")
    beta, wx, wy = _whitened_lstsq(y, x, metric)
    resid = wy - wx @ beta
    return DivergenceReport(
        value=float(resid @ resid),
        minimizer=x @ beta,
        kind="SSD",
        coefficients=beta,
    )


def column_space_contains(outer, inner, tol: float = 1e-8) -> bool:
    """True when every column of ``inner`` lies in the span of ``outer``."""
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    if outer.ndim == 1:
        outer = outer[:, None]
    if inner.ndim == 1:
        inner = inner[:, None]
    if outer.shape[0] != inner.shape[0]:
        return False
    coef, *_ = np.linalg.lstsq(outer, inner, rcond=None)
    resid = inner - outer @ coef
    scale = np.maximum(np.linalg.norm(inner, axis=0), 1.0)
    return bool(np.all(np.linalg.norm(resid, axis=0) <= tol * scale))
