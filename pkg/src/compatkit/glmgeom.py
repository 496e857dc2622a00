"""Divergence geometry for canonical-link GLMs.

Three fitting principles are supported, each the minimizer of a divergence
between the data ``y`` and the model mean ``mu(beta)``:

``"ML"``
    deviance dev(mu; y), i.e. maximum likelihood (IRLS / Fisher scoring).
``"min-Pearson"``
    SSD(y; mu) with the metric evaluated at mu, so the weights move with the
    fit.  This is the true minimum-Pearson-chi-square estimator, which is not
    the MLE for Poisson or binomial data.
``"GLS"``
    SSD(mu; y) with the metric frozen at y (the minimum-Neyman-chi-square
    estimator).

Binomial responses are given as success counts together with per-row trial
counts; internally they become proportions, and fitted means are reported as
proportions.  For the Gaussian family with known covariance every principle
reduces to the same generalized least-squares projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from compatkit.divergence import MetricSpec, column_space_contains, deviance, project_linear, ssd
from compatkit.errors import ConvergenceError, InvalidInputError, SingularError
from compatkit.families import GlmFamily
from compatkit.statdist import chi2_upper_tail

__all__ = [
    "PRINCIPLES",
    "GlmProblem",
    "FitResult",
    "FitStatistics",
    "NestedComparison",
    "ScheffeResult",
    "fit",
    "fit_statistics",
    "nested_compare",
    "scheffe_simultaneous",
]

PRINCIPLES = ("ML", "min-Pearson", "GLS")
_PRINCIPLE_ALIASES = {
    "ml": "ML",
    "deviance": "ML",
    "min-pearson": "min-Pearson",
    "pearson": "min-Pearson",
    "gls": "GLS",
    "neyman": "GLS",
}

SCORE_TOL = 1e-10
REL_CHANGE_TOL = 1e-12
MAX_ITER = 100
_MAX_HALVINGS = 60


def _principle(name: str) -> str:
    key = str(name).lower()
    if key not in _PRINCIPLE_ALIASES:
        raise InvalidInputError(f"unknown fitting principle {name!r}; expected one of {PRINCIPLES}")
    return _PRINCIPLE_ALIASES[key]


@dataclass(eq=False)
class GlmProblem:
    """Family, full-rank design, response and optional offset."""

    family: GlmFamily
    design: np.ndarray
    response: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.design, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.atleast_1d(np.asarray(self.response, dtype=float))
        if x.ndim != 2 or y.ndim != 1:
            raise InvalidInputError("design must be 2-D and response 1-D")
        if x.shape[0] != y.shape[0]:
            raise InvalidInputError(f"design has {x.shape[0]} rows but response has {y.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("design and response must be finite")
        if x.shape[1] == 0 or x.shape[1] > x.shape[0]:
            raise SingularError(f"design of shape {x.shape} cannot have full column rank")
        if np.linalg.matrix_rank(x) < x.shape[1]:
            raise SingularError("design matrix is not of full column rank")
        self.family.check_length(y.shape[0])
        if self.family.kind == "poisson" and np.any(y < 0):
            raise InvalidInputError("poisson responses must be nonnegative")
        if self.family.kind == "binomial":
            t = self.family.trials
            if np.any(y < 0) or np.any(y > t):
                raise InvalidInputError("binomial responses must lie in [0, trials]")
        off = np.zeros(y.shape[0]) if self.offset is None else np.asarray(self.offset, dtype=float)
        if off.shape != y.shape:
            raise InvalidInputError("offset must match the response length")
        self.design, self.response, self.offset = x, y, off

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def k(self) -> int:
        return self.design.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Response on the mean scale (proportions for the binomial)."""
        if self.family.kind == "binomial":
            return self.response / self.family.trials
        return self.response

    def with_response(self, mean_scale_response) -> "GlmProblem":
        """Same model with a different mean-scale response (e.g. fitted means)."""
        r = np.asarray(mean_scale_response, dtype=float)
        if self.family.kind == "binomial":
            r = r * self.family.trials
        return GlmProblem(self.family, self.design, r, self.offset)


@dataclass(eq=False)
class FitResult:
    beta: np.ndarray
    mu: np.ndarray
    principle: str
    iterations: int
    converged: bool
    objective: float
    score_norm: float
    problem: GlmProblem = field(repr=False)


@dataclass
class FitStatistics:
    pearson: float
    neyman: float
    deviance: float
    df: int
    p_pearson: float
    p_neyman: float
    p_deviance: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class NestedComparison(NamedTuple):
    statistic: float
    df: int
    p: float


class ScheffeResult(NamedTuple):
    p_joint: float
    p_components: np.ndarray
    statistic: float


def _tail(stat: float, df: int) -> float:
    # zero residual df: report full compatibility rather than an undefined tail
    if df < 1:
        return 1.0
    return chi2_upper_tail(max(stat, 0.0), df)


# -- objective pieces, as functions of the mean -------------------------------

def _mean_valid(family: GlmFamily, mu: np.ndarray) -> bool:
    if not np.all(np.isfinite(mu)):
        return False
    if family.kind == "poisson":
        return bool(np.all(mu > 0))
    if family.kind == "binomial":
        return bool(np.all((mu > 0) & (mu < 1)))
    return True


def _objective(principle: str, family: GlmFamily, y: np.ndarray, mu: np.ndarray, vy) -> float:
    if not _mean_valid(family, mu):
        return math.inf
    w = family.weights(y.shape[0])
    if principle == "ML":
        return deviance(mu, y, family)
    if principle == "min-Pearson":
        return float(math.fsum(w * (y - mu) ** 2 / family.unit_variance(mu)))
    return float(math.fsum(w * (y - mu) ** 2 / vy))


def _derivs(principle: str, family: GlmFamily, y: np.ndarray, mu: np.ndarray, vy):
    """First and second derivatives of the objective in eta, plus a PD fallback curvature."""
    w = family.weights(y.shape[0])
    v = family.unit_variance(mu)
    r = y - mu
    if principle == "ML":
        g = -2.0 * w * r
        h = 2.0 * w * v
        return g, h, h
    m1 = family.dmu_deta(mu)
    m2 = family.d2mu_deta2(mu)
    if principle == "min-Pearson":
        v1 = family.unit_variance_deriv(mu)
        v2 = family.unit_variance_deriv2(mu)
        f1 = w * (-2.0 * r / v - r * r * v1 / v**2)
        f2 = w * (2.0 / v + 4.0 * r * v1 / v**2 - r * r * v2 / v**2 + 2.0 * r * r * v1**2 / v**3)
        fallback = 2.0 * w * m1**2 / v
    else:
        f1 = -2.0 * w * r / vy
        f2 = 2.0 * w / vy
        fallback = f2 * m1**2
    return f1 * m1, f2 * m1**2 + f1 * m2, fallback


def _fit_gaussian(problem: GlmProblem, principle: str) -> FitResult:
    metric = MetricSpec(problem.family.covariance, anchor="known")
    proj = project_linear(problem.y - problem.offset, problem.design, metric)
    mu = proj.minimizer + problem.offset
    score = problem.design.T @ linalg.cho_solve((metric._chol, True), problem.y - mu)
    return FitResult(
        beta=proj.coefficients,
        mu=mu,
        principle=principle,
        iterations=1,
        converged=True,
        objective=proj.value,
        score_norm=float(np.max(np.abs(score))),
        problem=problem,
    )


def _start(problem: GlmProblem) -> np.ndarray:
    fam = problem.family
    eta0 = fam.link(fam.initial_mean(problem.y)) - problem.offset
    beta0, *_ = np.linalg.lstsq(problem.design, eta0, rcond=None)
    return beta0


def fit(problem: GlmProblem, principle: str = "ML", max_iter: int = MAX_ITER, start=None) -> FitResult:
    """Fit ``problem`` by minimizing the divergence named by ``principle``.

    Newton iterations on the linear predictor with step-halving whenever the
    objective would increase; when the exact Hessian is not positive
    definite a Fisher-type curvature is used for that step.  The score
    reported (and tested against ``SCORE_TOL``) is minus one half of the
    gradient of the objective in beta, i.e. ``X' W (y - mu)`` for ML.

    Raises
    ------
    ConvergenceError
        if the score tolerance is not met within ``max_iter`` iterations.
    SingularError
        for GLS when the data give a singular metric (zero counts, or 0/1
        proportions).
    """
    principle = _principle(principle)
    fam = problem.family
    if fam.kind == "gaussian":
        return _fit_gaussian(problem, principle)

    y = problem.y
    x = problem.design
    vy = None
    if principle == "GLS":
        vy = fam.unit_variance(y)
        if np.any(vy <= 0):
            raise SingularError(
                "GLS needs cov(Y; y) nonsingular: every count must be positive "
                "(and every binomial proportion strictly inside (0, 1))"
            )

    beta = _start(problem) if start is None else np.asarray(start, dtype=float).copy()

    def mean_of(b):
        with np.errstate(over="ignore"):
            return fam.inverse_link(x @ b + problem.offset)

    mu = mean_of(beta)
    obj = _objective(principle, fam, y, mu, vy)
    if not math.isfinite(obj):
        beta = _start(problem)
        mu = mean_of(beta)
        obj = _objective(principle, fam, y, mu, vy)

    # the score cannot be resolved below rounding in its largest terms
    scale = float(np.max(np.abs(x).T @ np.abs(fam.weights(y.shape[0]) * y)))
    tol = max(SCORE_TOL, 64.0 * np.finfo(float).eps * scale)
    score_norm = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g_eta, h_eta, h_fallback = _derivs(principle, fam, y, mu, vy)
        grad = x.T @ g_eta
        score_norm = 0.5 * float(np.max(np.abs(grad)))
        if score_norm <= tol:
            converged = True
            break
        hess = x.T @ (h_eta[:, None] * x)
        try:
            step = linalg.cho_solve(linalg.cho_factor(hess), -grad)
        except linalg.LinAlgError:
            hess = x.T @ (h_fallback[:, None] * x)
            try:
                step = linalg.cho_solve(linalg.cho_factor(hess), -grad)
            except linalg.LinAlgError as exc:
                raise SingularError("information matrix is singular during fitting") from exc

        t = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * step
            mu_c = mean_of(cand)
            obj_c = _objective(principle, fam, y, mu_c, vy)
            # rounding slack: near the optimum the decrease is below float resolution
            if obj_c <= obj + 1e-13 * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            # no descent possible in floating point: stationary to rounding
            converged = score_norm <= 1e3 * tol
            break
        rel = abs(obj - obj_c) / max(abs(obj_c), 1e-300)
        beta, mu, obj = cand, mu_c, obj_c
        if rel < REL_CHANGE_TOL:
            g_eta, *_ = _derivs(principle, fam, y, mu, vy)
            score_norm = 0.5 * float(np.max(np.abs(x.T @ g_eta)))
            if score_norm <= tol:
                converged = True
                break

    if not converged:
        raise ConvergenceError(
            f"{principle} fit did not converge in {max_iter} iterations "
            f"(score norm {score_norm:.3g})"
        )
    return FitResult(
        beta=beta,
        mu=mu,
        principle=principle,
        iterations=it,
        converged=True,
        objective=obj,
        score_norm=score_norm,
        problem=problem,
    )


def _metric_at(family: GlmFamily, mu: np.ndarray, anchor: str) -> MetricSpec:
    if family.kind == "gaussian":
        return MetricSpec(family.covariance, anchor=anchor)
    return MetricSpec(family.variances(mu), anchor=anchor)


def fit_statistics(problem: GlmProblem, fit_result: FitResult, baseline=None) -> FitStatistics:
    """Pearson, Neyman and deviance fit statistics against the saturated model.

    ``baseline`` (mean scale) replaces ``y`` as the saturated reference for
    the Neyman and deviance statistics; it is required when a Poisson count
    is zero or a binomial proportion is 0 or 1.
    """
    fam = problem.family
    y = problem.y
    mu = fit_result.mu
    df = problem.n - problem.k
    if fam.kind == "gaussian":
        stat = ssd(y, mu, _metric_at(fam, mu, "known"))
        p = _tail(stat, df)
        return FitStatistics(stat, stat, stat, df, p, p, p)

    ref = y if baseline is None else np.asarray(baseline, dtype=float)
    if ref.shape != y.shape:
        raise InvalidInputError("baseline must match the response length")
    if not _mean_valid(fam, ref):
        raise InvalidInputError(
            "saturated-reference statistics need every count positive (binomial: "
            "proportions strictly inside (0, 1)); supply a positive baseline"
        )
    pearson = ssd(y, mu, _metric_at(fam, mu, "mu"))
    neyman = ssd(mu, ref, _metric_at(fam, ref, "y"))
    dev = deviance(mu, ref, fam)
    return FitStatistics(
        pearson=pearson,
        neyman=neyman,
        deviance=dev,
        df=df,
        p_pearson=_tail(pearson, df),
        p_neyman=_tail(neyman, df),
        p_deviance=_tail(dev, df),
    )


def _information(family: GlmFamily, design: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if family.kind == "gaussian":
        wx = MetricSpec(family.covariance).whiten(design)
        return wx.T @ wx
    w = family.weights(mu.shape[0]) * family.unit_variance(mu)
    return design.T @ (w[:, None] * design)


def nested_compare(
    fit_a: FitResult,
    fit_m: FitResult,
    method: str = "LR",
    wald_anchor: str = "A",
) -> NestedComparison:
    """Compare a fitted submodel M against its embedding model A.

    ``method`` is ``"LR"`` (deviance dev(mu_M; mu_A)), ``"score"``
    (SSD(mu_A; mu_M), metric at mu_M) or ``"Wald"`` (quadratic form in the
    coefficient difference with the information at beta_A, or at the
    embedded beta_M when ``wald_anchor="M"``).
    """
    pa, pm = fit_a.problem, fit_m.problem
    fam = pa.family
    if pm.family.kind != fam.kind or pa.n != pm.n:
        raise InvalidInputError("models must share family and data")
    if not (np.allclose(pa.response, pm.response) and np.allclose(pa.offset, pm.offset)):
        raise InvalidInputError("models must be fitted to the same response and offset")
    if not column_space_contains(pa.design, pm.design, tol=1e-8):
        raise InvalidInputError("M is not nested in A: its design columns leave span(X_A)")
    df = pa.k - pm.k
    if df < 0:
        raise InvalidInputError("M has more columns than A")
    mu_a, mu_m = fit_a.mu, fit_m.mu
    key = method.lower()
    if key == "lr":
        stat = deviance(mu_m, mu_a, fam)
    elif key == "score":
        stat = ssd(mu_a, mu_m, _metric_at(fam, mu_m, "mu_M"))
    elif key == "wald":
        embedded, *_ = np.linalg.lstsq(pa.design, pm.design @ fit_m.beta, rcond=None)
        diff = fit_a.beta - embedded
        if wald_anchor.upper() == "A":
            info = _information(fam, pa.design, mu_a)
        elif wald_anchor.upper() == "M":
            info = _information(fam, pa.design, mu_m)
        else:
            raise InvalidInputError("wald_anchor must be 'A' or 'M'")
        stat = float(diff @ info @ diff)
    else:
        raise InvalidInputError(f"unknown comparison method {method!r}; use LR, score or Wald")
    stat = max(0.0, float(stat))
    return NestedComparison(stat, df, _tail(stat, df))


def scheffe_simultaneous(ybar, sigma, n: int) -> ScheffeResult:
    """Simultaneous P-value for mu = 0 from J-variate means with known covariance.

    The joint statistic is ``n * ybar' sigma^-1 ybar`` on J df; component
    P-values use ``n * ybar_j^2 / sigma_jj`` on 1 df each.
    """
    ybar = np.atleast_1d(np.asarray(ybar, dtype=float))
    cov = np.atleast_2d(np.asarray(sigma, dtype=float))
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n!r}")
    if cov.shape != (ybar.shape[0], ybar.shape[0]):
        raise InvalidInputError(f"covariance shape {cov.shape} does not match J={ybar.shape[0]}")
    metric = MetricSpec(cov)
    d = float(n) * ssd(ybar, np.zeros_like(ybar), metric)
    comps = np.array([chi2_upper_tail(n * ybar[j] ** 2 / cov[j, j], 1) for j in range(ybar.shape[0])])
    return ScheffeResult(chi2_upper_tail(d, ybar.shape[0]), comps, d)
