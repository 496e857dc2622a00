"""Seeded Monte Carlo for the sampling distribution of random P-values.

Replications are grouped into fixed blocks of ``BLOCK_SIZE``.  Block ``b`` is
drawn from a Philox counter-based generator keyed by ``(seed, b)``, and the
``i``-th replication always takes draw ``i % BLOCK_SIZE`` of block
``i // BLOCK_SIZE``.  The output therefore depends only on the seed and the
replication count, never on how blocks are scheduled across workers.
Uniforms are mapped to normal variates through the inverse normal CDF.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from compatkit.errors import InvalidInputError
from compatkit.hypotest import (
    HypothesisRegion,
    divergence_p_array,
    hl_umpu_p_array,
    tost_p_array,
)
from compatkit.statdist import normal_quantile_array, std_normal_cdf, std_normal_quantile, std_normal_sf

__all__ = [
    "BLOCK_SIZE",
    "METHODS",
    "SimConfig",
    "SimReport",
    "PowerComparison",
    "draw_estimates",
    "simulate_pvalues",
    "sample_p_distribution",
    "size_power",
    "power_comparison",
    "calibrate_alternative",
    "exact_rejection_probability",
    "ks_uniform_distance",
    "mc_se",
]

BLOCK_SIZE = 8192
METHODS = ("divergence", "HL-UMPU", "TOST")
DEFAULT_THRESHOLDS = (0.01, 0.05, 0.10)
_SEED_MAX = 2**64 - 1


def _method(name: str) -> str:
    key = {"divergence": "divergence", "hl": "HL-UMPU", "hl-umpu": "HL-UMPU", "tost": "TOST"}.get(
        str(name).lower()
    )
    if key is None:
        raise InvalidInputError(f"unknown method {name!r}; expected one of {METHODS}")
    return key


@dataclass(frozen=True)
class SimConfig:
    mu_true: float
    sigma: float
    n: int
    hypothesis: HypothesisRegion
    method: str = "divergence"
    reps: int = 10_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", _method(self.method))
        if not math.isfinite(self.mu_true):
            raise InvalidInputError("mu_true must be finite")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidInputError("sigma must be positive and finite")
        for name in ("n", "reps"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise InvalidInputError(f"{name} must be a positive integer, got {v!r}")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not (0 <= self.seed <= _SEED_MAX):
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        h = self.hypothesis
        if self.method == "HL-UMPU" and h.kind not in ("point", "interval"):
            raise InvalidInputError("HL-UMPU needs a bounded interval or point hypothesis")
        if self.method == "TOST" and h.kind != "nonequivalence":
            raise InvalidInputError("TOST needs a nonequivalence hypothesis")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "reps", int(self.reps))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def se(self) -> float:
        return self.sigma / math.sqrt(self.n)

    def to_dict(self) -> dict:
        return {
            "mu_true": self.mu_true,
            "sigma": self.sigma,
            "n": self.n,
            "hypothesis": self.hypothesis.to_dict(),
            "method": self.method,
            "reps": self.reps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "SimConfig":
        merged = {**d, **overrides}
        try:
            return cls(
                mu_true=float(merged["mu_true"]),
                sigma=float(merged.get("sigma", 1.0)),
                n=merged.get("n", 1),
                hypothesis=HypothesisRegion.from_dict(merged["hypothesis"]),
                method=merged.get("method", "divergence"),
                reps=merged.get("reps", 10_000),
                seed=merged.get("seed", 0),
            )
        except KeyError as exc:
            raise InvalidInputError(f"simulation config is missing {exc.args[0]!r}") from exc


@dataclass
class SimReport:
    """Summary of the simulated P-value distribution.

    ``ks_conditional`` is the Kolmogorov-Smirnov distance between the P-values
    strictly below one and the uniform(0, 1) law; ``ks_critical`` is the
    asymptotic 1% critical value ``1.63 / sqrt(conditional_count)``.
    """

    reps: int
    seed: int
    mass_at_one: float
    mass_at_one_se: float
    conditional_count: int
    ks_conditional: float
    ks_critical: float
    median_p: float
    rejection_rates: dict
    mc_se: dict
    config: dict = field(default_factory=dict)
    pvalues: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "mass_at_one": self.mass_at_one,
            "mass_at_one_se": self.mass_at_one_se,
            "conditional_count": self.conditional_count,
            "ks_conditional": self.ks_conditional,
            "ks_critical": self.ks_critical,
            "median_p": self.median_p,
            "rejection_rates": {repr(k): v for k, v in self.rejection_rates.items()},
            "mc_se": {repr(k): v for k, v in self.mc_se.items()},
            "config": self.config,
        }


class PowerComparison(NamedTuple):
    power_hl: float
    power_divergence: float
    se_hl: float
    se_divergence: float


def mc_se(rate: float, reps: int) -> float:
    """Binomial Monte Carlo standard error sqrt(r (1 - r) / reps)."""
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / reps)


def _block_uniforms(seed: int, block: int, size: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=int(seed) | (int(block) << 64)))
    k = gen.integers(0, 2**53, size=size, dtype=np.uint64)
    # midpoints of a 2^-53 grid: strictly inside (0, 1)
    return (k.astype(float) + 0.5) / 2.0**53


def draw_estimates(mu_true: float, se: float, reps: int, seed: int, workers: int = 1) -> np.ndarray:
    """``reps`` draws of the sample mean, Normal(mu_true, se^2)."""
    nblocks = -(-reps // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, reps - b * BLOCK_SIZE) for b in range(nblocks)]

    def one(b: int) -> np.ndarray:
        return mu_true + se * normal_quantile_array(_block_uniforms(seed, b, sizes[b]))

    if workers <= 1 or nblocks == 1:
        parts = [one(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(nblocks)))
    return np.concatenate(parts)


def _pvalues(x: np.ndarray, config: SimConfig) -> np.ndarray:
    h = config.hypothesis
    if config.method == "divergence":
        return divergence_p_array(x, h, config.sigma, config.n)
    if config.method == "HL-UMPU":
        return hl_umpu_p_array(x, h, config.sigma, config.n)
    return tost_p_array(x, h, config.sigma, config.n)


def simulate_pvalues(config: SimConfig, workers: int = 1) -> np.ndarray:
    """Per-replication P-values, in replication order."""
    x = draw_estimates(config.mu_true, config.se, config.reps, config.seed, workers)
    return _pvalues(x, config)


def ks_uniform_distance(values) -> float:
    """Kolmogorov-Smirnov distance between a sample and uniform(0, 1)."""
    u = np.sort(np.asarray(values, dtype=float))
    m = u.shape[0]
    if m == 0:
        return 0.0
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - u), np.max(u - (i - 1) / m)))


def _rates(p: np.ndarray, thresholds: Sequence[float]) -> tuple[dict, dict]:
    reps = p.shape[0]
    rates, ses = {}, {}
    for t in sorted(float(v) for v in thresholds):
        r = int(np.count_nonzero(p <= t)) / reps
        rates[t] = r
        ses[t] = mc_se(r, reps)
    return rates, ses


def sample_p_distribution(
    config: SimConfig,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    workers: int = 1,
    keep_pvalues: bool = False,
) -> SimReport:
    """Simulate the random P-value of ``config`` and summarize its law."""
    p = simulate_pvalues(config, workers)
    reps = config.reps
    at_one = int(np.count_nonzero(p >= 1.0))
    cond = p[p < 1.0]
    mass = at_one / reps
    rates, ses = _rates(p, thresholds)
    return SimReport(
        reps=reps,
        seed=config.seed,
        mass_at_one=mass,
        mass_at_one_se=mc_se(mass, reps),
        conditional_count=int(cond.shape[0]),
        ks_conditional=ks_uniform_distance(cond),
        ks_critical=1.63 / math.sqrt(cond.shape[0]) if cond.shape[0] else math.inf,
        median_p=float(np.median(p)),
        rejection_rates=rates,
        mc_se=ses,
        config=config.to_dict(),
        pvalues=p if keep_pvalues else None,
    )


def size_power(configs: Sequence[SimConfig], thresholds: Sequence[float], workers: int = 1) -> list[dict]:
    """Empirical Pr(p <= threshold) for each configuration, with standard errors."""
    rows = []
    for cfg in configs:
        rates, ses = _rates(simulate_pvalues(cfg, workers), thresholds)
        rows.append({"config": cfg.to_dict(), "rejection_rates": rates, "mc_se": ses})
    return rows


def calibrate_alternative(
    hypothesis: HypothesisRegion, sigma: float, n: int, power: float = 0.80, alpha: float = 0.05
) -> float:
    """Alternative above the upper endpoint at which the one-sided test has ``power``.

    ``hi + (z_{1-alpha} + z_{power}) sigma / sqrt(n)``; accurate for the UMPU
    interval test when the lower endpoint is many standard errors away.
    """
    if not math.isfinite(hypothesis.hi):
        raise InvalidInputError("calibration needs a finite upper endpoint")
    se = sigma / math.sqrt(n)
    return hypothesis.hi + (std_normal_quantile(1.0 - alpha) + std_normal_quantile(power)) * se


def power_comparison(
    alt: float,
    interval: HypothesisRegion,
    n: int,
    reps: int,
    seed: int,
    sigma: float = 1.0,
    alpha: float = 0.05,
    workers: int = 1,
) -> PowerComparison:
    """Rejection rates of ``p_HL <= alpha`` and ``p_M <= alpha`` on shared draws."""
    if interval.kind not in ("point", "interval"):
        raise InvalidInputError("power comparison needs a bounded interval")
    cfg = SimConfig(alt, sigma, n, interval, "HL-UMPU", reps, seed)
    x = draw_estimates(alt, cfg.se, reps, seed, workers)
    p_hl = hl_umpu_p_array(x, interval, sigma, n)
    p_div = divergence_p_array(x, interval, sigma, n)
    r_hl = int(np.count_nonzero(p_hl <= alpha)) / reps
    r_div = int(np.count_nonzero(p_div <= alpha)) / reps
    return PowerComparison(r_hl, r_div, mc_se(r_hl, reps), mc_se(r_div, reps))


def _hl_cutoff(zh: float, alpha: float) -> float:
    # smallest standardized distance from the center at which p_HL <= alpha
    def p_hl(z: float) -> float:
        return std_normal_sf(z + zh) + std_normal_sf(z - zh)

    lo, hi = 0.0, zh + 40.0
    if p_hl(lo) <= alpha:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if p_hl(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def exact_rejection_probability(config: SimConfig, alpha: float) -> float:
    """Closed-form Pr(P <= alpha) under Normal(mu_true, se^2) estimates.

    Serves as the analytic check on the simulated rates.
    """
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError("alpha must lie in (0, 1)")
    h = config.hypothesis
    se = config.se
    mu = config.mu_true

    def pr_below(x: float) -> float:
        if x == -math.inf:
            return 0.0
        if x == math.inf:
            return 1.0
        return std_normal_cdf((x - mu) / se)

    if config.method == "divergence":
        c = std_normal_quantile(1.0 - alpha / 2.0) * se
        if h.kind == "nonequivalence":
            lo, hi = h.lo + c, h.hi - c
            return max(0.0, pr_below(hi) - pr_below(lo)) if lo < hi else 0.0
        return pr_below(h.lo - c) + (1.0 - pr_below(h.hi + c))
    if config.method == "TOST":
        c = std_normal_quantile(1.0 - alpha) * se
        lo, hi = h.lo + c, h.hi - c
        return max(0.0, pr_below(hi) - pr_below(lo)) if lo <= hi else 0.0
    center = 0.5 * (h.lo + h.hi)
    zh = 0.5 * (h.hi - h.lo) / se
    c = _hl_cutoff(zh, alpha) * se
    if c == 0.0:
        return 1.0
    return pr_below(center - c) + (1.0 - pr_below(center + c))
