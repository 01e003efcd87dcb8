"""Discount functions, per-horizon stage weights and admissibility checks.

A *uniform* discount is a function ``beta: [0, 1] -> [0, 1]``; stage ``k`` of a
horizon-``N`` problem is weighted by ``beta(k / N)``.  An *explicit* schedule
produces the weights for each ``N`` directly and need not come from any such
function (it is used to reproduce the staircase counterexample).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

BUILTIN_NAMES = ("linear", "half-linear", "polynomial", "undiscounted", "example1-staircase")

_ALIASES = {
    "lin": "linear",
    "half-lin": "half-linear",
    "halflin": "half-linear",
    "poly": "polynomial",
    "un": "undiscounted",
    "staircase": "example1-staircase",
}


@dataclass(frozen=True)
class UniformDiscount:
    """Discount given by a shape function on ``[0, 1]``."""

    name: str
    beta: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, xi):
        return self.beta(np.asarray(xi, dtype=float))

    @property
    def label(self) -> str:
        if self.name == "polynomial":
            return f"poly:{self.params['q']}"
        return _SHORT.get(self.name, self.name)


@dataclass(frozen=True)
class ExplicitDiscount:
    """Discount given by a generator ``N -> weights`` (possibly non-uniform)."""

    name: str
    generator: Callable[[int], Sequence[float]]
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return _SHORT.get(self.name, self.name)


_SHORT = {
    "linear": "lin",
    "half-linear": "half-lin",
    "undiscounted": "un",
    "example1-staircase": "staircase",
}


WeightSchedule = UniformDiscount | ExplicitDiscount


@dataclass
class DiscountReport:
    is_valid: bool
    beta0: float
    beta1: float
    lipschitz_estimate: float
    max_increase: float
    end_slope_estimate: float
    violated_conditions: list

    def summary(self) -> str:
        lines = [
            f"valid:              {self.is_valid}",
            f"beta(0):            {self.beta0:.12g}",
            f"beta(1):            {self.beta1:.12g}",
            f"Lipschitz estimate: {self.lipschitz_estimate:.12g}",
            f"max increase:       {self.max_increase:.3g}",
            f"end slope estimate: {self.end_slope_estimate:.12g}",
        ]
        if self.violated_conditions:
            lines.append("violated:           " + ", ".join(self.violated_conditions))
        return "\n".join(lines)


def weights(schedule: WeightSchedule, N: int) -> np.ndarray:
    """Stage weights ``w_0 .. w_{N-1}`` for horizon ``N``."""
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    if isinstance(schedule, UniformDiscount):
        w = np.asarray(schedule(np.arange(N) / N), dtype=float)
        w = np.broadcast_to(w, (N,)).copy()
    else:
        w = np.asarray(schedule.generator(N), dtype=float)
        if w.shape != (N,):
            raise ValueError(f"schedule {schedule.name!r} produced {w.shape} weights for N={N}")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError(f"schedule {schedule.name!r} produced weights outside [0, 1]")
    return w


def staircase_weights(N: int) -> np.ndarray:
    """Non-uniform staircase: ``w[k-1] = w[k] = 1 - k/N`` for even ``k``, ``w[0] = 1``."""
    w = np.empty(N)
    w[0] = 1.0
    for k in range(2, N + 1, 2):
        value = 1.0 - k / N
        w[k - 1] = value
        if k < N:
            w[k] = value
    return w


def _linear(xi):
    return 1.0 - xi


def _half_linear(xi):
    return np.minimum(1.0, 2.0 - 2.0 * xi)


def _undiscounted(xi):
    return np.ones_like(xi)


def builtin(name: str, **params) -> WeightSchedule:
    """Look up a named discount.

    ``polynomial`` takes an integer ``q >= 1`` and means ``1 - xi**q``.
    Short aliases (``lin``, ``half-lin``, ``poly``, ``un``) are accepted.
    """
    name = _ALIASES.get(name, name)
    if name == "linear":
        return UniformDiscount("linear", _linear)
    if name == "half-linear":
        return UniformDiscount("half-linear", _half_linear)
    if name == "undiscounted":
        return UniformDiscount("undiscounted", _undiscounted)
    if name == "polynomial":
        q = params.get("q")
        if q is None or isinstance(q, bool) or int(q) != q or int(q) < 1:
            raise ValueError(f"polynomial discount needs an integer q >= 1, got {q!r}")
        q = int(q)
        return UniformDiscount("polynomial", lambda xi: 1.0 - xi ** q, {"q": q})
    if name == "example1-staircase":
        return ExplicitDiscount("example1-staircase", staircase_weights)
    raise ValueError(f"unknown discount {name!r}; expected one of {BUILTIN_NAMES}")


def parse(spec: str) -> WeightSchedule:
    """Parse a compact spec such as ``lin``, ``half-lin`` or ``poly:2``."""
    name, _, arg = spec.strip().partition(":")
    if arg:
        return builtin(name, q=int(arg))
    return builtin(name)


def from_config(entry: dict) -> WeightSchedule:
    """Build a schedule from ``{"name": ..., "q": ...}``."""
    params = {k: v for k, v in entry.items() if k != "name"}
    return builtin(entry["name"], **params)


def piecewise_linear(breakpoints: Sequence[float], values: Sequence[float],
                     name: str = "piecewise-linear") -> UniformDiscount:
    """User discount interpolating ``values`` at ``breakpoints`` on ``[0, 1]``."""
    xs = np.asarray(breakpoints, dtype=float)
    ys = np.asarray(values, dtype=float)
    if xs[0] != 0.0 or xs[-1] != 1.0 or np.any(np.diff(xs) <= 0):
        raise ValueError("breakpoints must increase from 0 to 1")
    xs_t, ys_t = tuple(xs), tuple(ys)
    return UniformDiscount(name, lambda xi: np.interp(xi, xs_t, ys_t),
                           {"breakpoints": xs_t, "values": ys_t})


def _zoomed_lipschitz(schedule, xi, slopes, levels: int = 2, points: int = 1001) -> float:
    # secants never exceed the true constant; resample around the steepest one
    best = float(np.max(np.abs(slopes)))
    i = int(np.argmax(np.abs(slopes)))
    lo, hi = xi[i], xi[i + 1]
    for _ in range(levels):
        width = hi - lo
        grid = np.linspace(max(0.0, lo - width), min(1.0, hi + width), points)
        vals = np.broadcast_to(np.asarray(schedule(grid), dtype=float), grid.shape)
        s = np.abs(np.diff(vals) / np.diff(grid))
        j = int(np.argmax(s))
        best = max(best, float(s[j]))
        lo, hi = grid[j], grid[j + 1]
    return best


def validate_discount(schedule: UniformDiscount, samples: int = 10001,
                      tail_window: float = 0.05) -> DiscountReport:
    """Check a uniform discount numerically on a grid of ``samples`` points.

    Derivative conditions are replaced by secant slopes between neighbouring
    grid points.  The Lipschitz estimate additionally resamples the steepest
    secant's neighbourhood on finer grids, so it approaches the supremum of
    ``|beta'|`` from below.
    """
    if not isinstance(schedule, UniformDiscount):
        raise TypeError("only uniform discounts can be validated")
    if samples < 10:
        raise ValueError("samples must be >= 10")
    if not 0.0 < tail_window < 1.0:
        raise ValueError("tail_window must lie in (0, 1)")

    xi = np.linspace(0.0, 1.0, samples)
    b = np.broadcast_to(np.asarray(schedule(xi), dtype=float), xi.shape)
    slopes = np.diff(b) / np.diff(xi)
    increase = float(max(0.0, np.max(np.diff(b))))
    lipschitz = _zoomed_lipschitz(schedule, xi, slopes)
    tail = xi[1:] >= 1.0 - tail_window - 1e-15
    end_slope = float(np.max(slopes[tail]))

    violated = []
    if abs(b[0] - 1.0) > 1e-12:
        violated.append("beta(0)=1")
    if abs(b[-1]) > 1e-12:
        violated.append("beta(1)=0")
    if np.any(b < -1e-12) or np.any(b > 1 + 1e-12):
        violated.append("range")
    if increase > 1e-12:
        violated.append("non-increasing")
    if end_slope > -1e-9:
        violated.append("end-slope")
    return DiscountReport(not violated, float(b[0]), float(b[-1]), lipschitz,
                          increase, end_slope, violated)


def linear_lower_bound(schedule: UniformDiscount, samples: int = 10001) -> float:
    """Largest ``c`` with ``beta(xi) >= c (1 - xi)`` on the sample grid."""
    xi = np.linspace(0.0, 1.0, samples)[:-1]
    b = np.broadcast_to(np.asarray(schedule(xi), dtype=float), xi.shape)
    return float(np.min(b / (1.0 - xi)))
