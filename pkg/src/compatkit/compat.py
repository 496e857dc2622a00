"""P-value functions, S-value curves and compatibility intervals.

An *engine* is any pure callable mapping a parameter value to a P-value.
Intervals are the closed sets ``{beta : p(beta) >= pi}``; the open version
``p(beta) > pi`` differs only at the two endpoints.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from compatkit.errors import InvalidInputError
from compatkit.numfmt import format_float
from compatkit.hypotest import (
    GaussianSummary,
    HypothesisRegion,
    hl_umpu_p,
    interval_divergence_p,
    point_p,
)

__all__ = [
    "CompatCurve",
    "CompatInterval",
    "pvalue_function",
    "compatibility_interval",
    "normal_mean_engine",
    "interval_engine",
    "region_mask",
]

Engine = Callable[[float], float]

_MAX_EXPANSIONS = 200
_MAX_BISECTIONS = 200


def _s2(p: float) -> float:
    return math.inf if p <= 0.0 else (0.0 if p >= 1.0 else -math.log2(p))


@dataclass
class CompatCurve:
    grid: np.ndarray
    p: np.ndarray
    s2: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("beta,p,s2\n")
        for b, p, s in zip(self.grid, self.p, self.s2):
            buf.write(f"{format_float(b)},{format_float(p)},{format_float(s)}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"beta": self.grid.tolist(), "p": self.p.tolist(), "s2": self.s2.tolist()}


@dataclass
class CompatInterval:
    pi: float
    lo: float
    hi: float
    empty: bool = False

    def contains(self, beta: float) -> bool:
        return not self.empty and self.lo <= beta <= self.hi

    def to_dict(self) -> dict:
        return {"pi": self.pi, "lo": self.lo, "hi": self.hi, "empty": self.empty}


def pvalue_function(engine: Engine, lo: float, hi: float, steps: int) -> CompatCurve:
    """Evaluate ``engine`` on ``steps`` equally spaced points of [lo, hi]."""
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidInputError(f"grid needs finite lo < hi, got [{lo}, {hi}]")
    if isinstance(steps, bool) or int(steps) != steps or steps < 2:
        raise InvalidInputError(f"grid needs at least 2 steps, got {steps!r}")
    grid = np.linspace(lo, hi, int(steps))
    p = np.array([float(engine(float(b))) for b in grid])
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise InvalidInputError("engine returned values outside [0, 1]")
    return CompatCurve(grid=grid, p=p, s2=np.array([_s2(v) for v in p]))


def _flank(engine: Engine, pi: float, center: float, direction: float, step: float) -> float:
    inner = center
    width = step
    outer = None
    for _ in range(_MAX_EXPANSIONS):
        candidate = center + direction * width
        if engine(candidate) < pi:
            outer = candidate
            break
        inner = candidate
        width *= 2.0
        if not math.isfinite(width):
            break
    if outer is None:
        return direction * math.inf
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (inner + outer)
        if mid == inner or mid == outer:
            break
        if engine(mid) >= pi:
            inner = mid
        else:
            outer = mid
    return inner


def compatibility_interval(engine: Engine, pi: float, center: float, step: float = 1.0) -> CompatInterval:
    """Closed pi-compatibility interval of a unimodal P-value function.

    Parameters
    ----------
    engine : callable
        Maps a parameter value to its P-value; must peak at ``center`` and be
        monotone on each side of it.
    pi : float
        Threshold in (0, 1).
    center : float
        Location of the maximum (the point estimate).
    step : float
        Initial outward step, ideally about one standard error.

    Each endpoint is bracketed by doubling steps and then bisected until the
    bracket cannot be split in floating point.
    """
    pi = float(pi)
    if not (0.0 < pi < 1.0):
        raise InvalidInputError(f"pi must lie in (0, 1), got {pi!r}")
    if not (step > 0 and math.isfinite(step)):
        raise InvalidInputError("step must be positive and finite")
    if engine(center) < pi:
        return CompatInterval(pi=pi, lo=math.nan, hi=math.nan, empty=True)
    lo = _flank(engine, pi, center, -1.0, step)
    hi = _flank(engine, pi, center, 1.0, step)
    return CompatInterval(pi=pi, lo=lo, hi=hi, empty=False)


def normal_mean_engine(mean_hat: float, se: float) -> Engine:
    """Two-sided P-value for mu = beta given an estimate and its standard error."""
    s = GaussianSummary(mean_hat, se, 1)
    return lambda beta: point_p(s, beta).p


def interval_engine(summary: GaussianSummary, half_width: float, method: str = "divergence") -> Engine:
    """P-value for the interval hypothesis [beta - half_width, beta + half_width].

    ``method`` is ``"divergence"`` (max-p) or ``"hl"`` (UMPU), so the two
    compatibility regions can be set side by side.
    """
    if not (half_width >= 0 and math.isfinite(half_width)):
        raise InvalidInputError("half_width must be finite and nonnegative")
    fn = {"divergence": interval_divergence_p, "hl": hl_umpu_p}.get(method)
    if fn is None:
        raise InvalidInputError(f"unknown method {method!r}; use 'divergence' or 'hl'")
    return lambda beta: fn(summary, HypothesisRegion.interval(beta - half_width, beta + half_width)).p


def region_mask(engine: Callable[[np.ndarray], float], axes: Sequence[Sequence[float]], pi: float):
    """Grid mask of a multi-parameter compatibility region.

    Returns ``(p, mask)`` arrays shaped like the grid spanned by ``axes``
    (``indexing="ij"``), with ``mask = p >= pi``.
    """
    if not (0.0 < pi < 1.0):
        raise InvalidInputError(f"pi must lie in (0, 1), got {pi!r}")
    mesh = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    p = np.array([float(engine(pt)) for pt in points]).reshape(mesh[0].shape)
    return p, p >= pi
