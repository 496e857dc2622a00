"""P-values for a normal mean with known sigma.

Covers point, interval, half-line and nonequivalence hypotheses, under the
divergence (max-p) definition and under the decision definitions (the
Hodges-Lehmann UMPU interval test and TOST), plus the S-value, Bayes-factor
bound and coin-toss transforms.

Every P-value is a function of the standardized offsets
``(mean_hat - endpoint) * sqrt(n) / sigma`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from compatkit.divergence import project_interval
from compatkit.errors import InvalidInputError
from compatkit.statdist import (
    chi2_log_upper_tail,
    chi2_upper_tail,
    log_std_normal_sf,
    normal_cdf_array,
    std_normal_sf,
)

__all__ = [
    "GaussianSummary",
    "HypothesisRegion",
    "PValueReport",
    "point_p",
    "interval_divergence_p",
    "hl_umpu_p",
    "tost_p",
    "nonequivalence_divergence_p",
    "svalue",
    "bf_lower_bound",
    "bf_lower_bound_from_svalue",
    "coin_toss_equivalent",
    "divergence_p_array",
    "hl_umpu_p_array",
    "tost_p_array",
]

# P-values below this are reported as exactly zero
P_UNDERFLOW = 1e-320
_LN2 = math.log(2.0)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class GaussianSummary:
    """Sufficient statistics for the normal-mean model with known sigma."""

    mean_hat: float
    sigma: float
    n: int = 1

    def __post_init__(self):
        if not math.isfinite(self.mean_hat):
            raise InvalidInputError(f"mean_hat must be finite, got {self.mean_hat!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidInputError(f"sigma must be positive and finite, got {self.sigma!r}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "mean_hat", float(self.mean_hat))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "n", int(self.n))

    @property
    def precision_scale(self) -> float:
        """sqrt(n) / sigma: multiplies a mean difference into z units."""
        return math.sqrt(self.n) / self.sigma

    @property
    def se(self) -> float:
        return self.sigma / math.sqrt(self.n)


@dataclass(frozen=True)
class HypothesisRegion:
    """Constraint on a scalar mean.

    ``kind`` is ``"point"``, ``"interval"``, ``"half-line"`` or
    ``"nonequivalence"``.  For the first three the region is the closed set
    ``[lo, hi]`` (one end infinite for a half-line).  For nonequivalence the
    region is the complement of the open interval ``(lo, hi)``.
    """

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise InvalidInputError("region endpoints must not be NaN")
        if lo > hi:
            raise InvalidInputError(f"region endpoints out of order: {lo} > {hi}")
        if self.kind == "point":
            if lo != hi or not math.isfinite(lo):
                raise InvalidInputError("a point hypothesis needs lo == hi, finite")
        elif self.kind == "interval":
            pass
        elif self.kind == "half-line":
            if math.isfinite(lo) == math.isfinite(hi):
                raise InvalidInputError("a half-line needs exactly one infinite endpoint")
        elif self.kind == "nonequivalence":
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidInputError("nonequivalence needs finite lo < hi")
        else:
            raise InvalidInputError(f"unknown hypothesis kind {self.kind!r}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, m: float) -> "HypothesisRegion":
        return cls("point", m, m)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "HypothesisRegion":
        """Closed interval; an infinite endpoint makes it a half-line."""
        lo, hi = float(lo), float(hi)
        if math.isfinite(lo) != math.isfinite(hi):
            return cls("half-line", lo, hi)
        if lo == hi:
            return cls("point", lo, hi)
        return cls("interval", lo, hi)

    @classmethod
    def at_most(cls, m: float) -> "HypothesisRegion":
        return cls("half-line", -math.inf, m)

    @classmethod
    def at_least(cls, m: float) -> "HypothesisRegion":
        return cls("half-line", m, math.inf)

    @classmethod
    def nonequivalence(cls, lo: float, hi: float) -> "HypothesisRegion":
        return cls("nonequivalence", lo, hi)

    def contains(self, x: float) -> bool:
        if self.kind == "nonequivalence":
            return x <= self.lo or x >= self.hi
        return self.lo <= x <= self.hi

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "HypothesisRegion":
        return cls(d["kind"], float(d["lo"]), float(d["hi"]))


@dataclass
class PValueReport:
    """A P-value with its divergence and information-scale transforms.

    ``s2`` is in bits and ``se`` in nats.  ``log_p`` is the natural log of
    ``p`` from a log-scale computation, so S-values stay finite even when
    ``p`` underflows to zero.
    """

    p: float
    method: str
    divergence_value: float
    s2: float
    se: float
    bf_lower: float
    log_p: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "method": self.method,
            "divergence_value": self.divergence_value,
            "s2": self.s2,
            "se": self.se,
            "bf_lower": self.bf_lower,
            "log_p": self.log_p,
            **self.details,
        }


def _report(p: float, log_p: float, method: str, divergence: float, **details) -> PValueReport:
    p = min(1.0, max(0.0, p))
    if p < P_UNDERFLOW:
        p = 0.0
    log_p = min(0.0, log_p)
    se = -log_p if log_p < 0 else 0.0
    return PValueReport(
        p=p,
        method=method,
        divergence_value=divergence,
        s2=se / _LN2,
        se=se,
        bf_lower=bf_lower_bound(p),
        log_p=log_p,
        details=details,
    )


def _chi2_1_report(d: float, method: str, **details) -> PValueReport:
    p = chi2_upper_tail(d, 1)
    log_p = math.log(p) if p > 1e-300 else chi2_log_upper_tail(d, 1)
    return _report(p, log_p, method, d, **details)


def _two_sided(s: GaussianSummary, m: float) -> float:
    return chi2_upper_tail(((s.mean_hat - m) * s.precision_scale) ** 2, 1)


def point_p(s: GaussianSummary, m: float) -> PValueReport:
    """Two-sided P-value for H: mu = m, via d = (n / sigma^2)(mean_hat - m)^2.

    Examples
    --------
    >>> round(point_p(GaussianSummary(2.0, 1.0, 1), 0.0).p, 7)
    0.0455003
    """
    m = float(m)
    if not math.isfinite(m):
        raise InvalidInputError(f"m must be finite, got {m!r}")
    d = ((s.mean_hat - m) * s.precision_scale) ** 2
    return _chi2_1_report(d, "divergence")


def interval_divergence_p(s: GaussianSummary, h: HypothesisRegion) -> PValueReport:
    """Max-p (divergence) P-value for a closed interval or half-line.

    The divergence is the standardized squared distance from ``mean_hat`` to
    the interval; it is zero, and p is one, whenever the estimate lies in
    the interval.
    """
    if h.kind == "nonequivalence":
        raise InvalidInputError("use nonequivalence_divergence_p for nonequivalence regions")
    nearest = project_interval(s.mean_hat, h.lo, h.hi)
    d = ((s.mean_hat - nearest) * s.precision_scale) ** 2
    return _chi2_1_report(d, "divergence", nearest=nearest)


def _log_add(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def hl_umpu_p(s: GaussianSummary, h: HypothesisRegion) -> PValueReport:
    """Hodges-Lehmann UMPU P-value for a bounded interval hypothesis.

    Uses the equal-size two-cutoff rejection region: with
    ``z = |mean_hat - center| sqrt(n)/sigma`` and ``zh = half_width sqrt(n)/sigma``,
    ``p = Phi(-z - zh) + 1 - Phi(z - zh)``.  Outside the open interval this is
    the mean of the two endpoint two-sided P-values; at a point hypothesis it
    is the ordinary two-sided P-value.
    """
    if h.kind not in ("point", "interval"):
        raise InvalidInputError("the UMPU interval P-value needs a bounded interval or point")
    scale = s.precision_scale
    center = 0.5 * (h.lo + h.hi)
    z = abs(s.mean_hat - center) * scale
    zh = 0.5 * (h.hi - h.lo) * scale
    p = std_normal_sf(z + zh) + std_normal_sf(z - zh)
    log_p = _log_add(log_std_normal_sf(z + zh), log_std_normal_sf(z - zh))
    p_lo = _two_sided(s, h.lo)
    p_hi = _two_sided(s, h.hi)
    if z >= zh:
        mean_endpoint = 0.5 * (p_lo + p_hi)
        assert abs(p - mean_endpoint) <= 1e-12, (p, mean_endpoint)
    nearest = project_interval(s.mean_hat, h.lo, h.hi)
    d = ((s.mean_hat - nearest) * scale) ** 2
    return _report(p, log_p, "HL-UMPU", d, p_lower_endpoint=p_lo, p_upper_endpoint=p_hi)


def _nonequivalence_distance(s: GaussianSummary, lo: float, hi: float) -> float:
    x = s.mean_hat
    if x <= lo or x >= hi:
        return 0.0
    # ties at the center go to the upper endpoint; the distance is the same
    return min(x - lo, hi - x)


def tost_p(s: GaussianSummary, equivalence_bounds) -> PValueReport:
    """TOST P-value max(p_L, p_U) for the nonequivalence hypothesis.

    ``p_L`` is the one-sided P-value for mu <= lo and ``p_U`` for mu >= hi.
    """
    if isinstance(equivalence_bounds, HypothesisRegion):
        lo, hi = equivalence_bounds.lo, equivalence_bounds.hi
    else:
        lo, hi = (float(v) for v in equivalence_bounds)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidInputError("equivalence bounds need finite lo < hi")
    scale = s.precision_scale
    z_lo = (s.mean_hat - lo) * scale
    z_hi = (hi - s.mean_hat) * scale
    p_lower = std_normal_sf(z_lo)
    p_upper = std_normal_sf(z_hi)
    log_p = max(log_std_normal_sf(z_lo), log_std_normal_sf(z_hi))
    d = (_nonequivalence_distance(s, lo, hi) * scale) ** 2
    return _report(max(p_lower, p_upper), log_p, "TOST", d, p_lower=p_lower, p_upper=p_upper)


def nonequivalence_divergence_p(s: GaussianSummary, h: HypothesisRegion) -> PValueReport:
    """Divergence P-value for H: mu <= lo or mu >= hi.

    One when the estimate lies in H, otherwise the two-sided P-value at the
    nearer endpoint.
    """
    if h.kind != "nonequivalence":
        raise InvalidInputError("expected a nonequivalence region")
    d = (_nonequivalence_distance(s, h.lo, h.hi) * s.precision_scale) ** 2
    return _chi2_1_report(d, "divergence")


def svalue(p: float, base: float = 2.0) -> float:
    """Surprisal -log_base(p); ``math.inf`` for p == 0."""
    p, base = float(p), float(base)
    if not (0.0 <= p <= 1.0):
        raise InvalidInputError(f"p must lie in [0, 1], got {p!r}")
    if not (base > 1.0 and math.isfinite(base)):
        raise InvalidInputError(f"base must exceed 1, got {base!r}")
    if p == 0.0:
        return math.inf
    if p == 1.0:
        return 0.0
    return -math.log(p) / math.log(base)


def bf_lower_bound(p: float, cap: bool = True) -> float:
    """Lower bound -e p ln(p) on the Bayes factor for the tested hypothesis.

    With ``cap`` (the default) the bound is 1 for p > 1/e, where the raw
    expression turns back down.  p == 0 gives 0 by continuity.
    """
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise InvalidInputError(f"p must lie in [0, 1], got {p!r}")
    if p == 0.0:
        return 0.0
    if cap and p > math.exp(-1.0):
        return 1.0
    return min(1.0, -math.e * p * math.log(p))


def bf_lower_bound_from_svalue(se: float) -> float:
    """Same bound written through the natural S-value: se / exp(se - 1)."""
    se = float(se)
    if math.isnan(se) or se < 0:
        raise InvalidInputError(f"S-value must be nonnegative, got {se!r}")
    if se == math.inf:
        return 0.0
    return se / math.exp(se - 1.0)


def coin_toss_equivalent(s2: float) -> int:
    """Number of all-heads fair-coin tosses carrying the same information."""
    s2 = float(s2)
    if not math.isfinite(s2) or s2 < 0:
        raise InvalidInputError(f"S-value must be finite and nonnegative, got {s2!r}")
    return int(round(s2))


# vectorized forms for Monte Carlo use; same formulas as the scalar versions

def _two_sided_from_z(z: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, 2.0 * normal_cdf_array(-np.abs(z)))


def divergence_p_array(mean_hat, region: HypothesisRegion, sigma: float, n: int) -> np.ndarray:
    """Divergence P-values for an array of estimates."""
    x = np.asarray(mean_hat, dtype=float)
    scale = math.sqrt(n) / sigma
    if region.kind == "nonequivalence":
        inside = (x > region.lo) & (x < region.hi)
        dist = np.where(inside, np.minimum(x - region.lo, region.hi - x), 0.0)
    else:
        dist = x - np.clip(x, region.lo, region.hi)
    return _two_sided_from_z(dist * scale)


def hl_umpu_p_array(mean_hat, region: HypothesisRegion, sigma: float, n: int) -> np.ndarray:
    if region.kind not in ("point", "interval"):
        raise InvalidInputError("the UMPU interval P-value needs a bounded interval or point")
    x = np.asarray(mean_hat, dtype=float)
    scale = math.sqrt(n) / sigma
    z = np.abs(x - 0.5 * (region.lo + region.hi)) * scale
    zh = 0.5 * (region.hi - region.lo) * scale
    return np.minimum(1.0, normal_cdf_array(-z - zh) + normal_cdf_array(zh - z))


def tost_p_array(mean_hat, region: HypothesisRegion, sigma: float, n: int) -> np.ndarray:
    x = np.asarray(mean_hat, dtype=float)
    scale = math.sqrt(n) / sigma
    p_lower = normal_cdf_array(-(x - region.lo) * scale)
    p_upper = normal_cdf_array(-(region.hi - x) * scale)
    return np.maximum(p_lower, p_upper)
