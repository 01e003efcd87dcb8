"""Receding-horizon closed loops and their asymptotic performance.

Three schemes are supported:

``discounted``
    re-solve every step and apply the first optimal input;
``pstep``
    re-solve every ``p`` steps and apply the first ``p`` optimal inputs;
``terminal``
    re-solve every step with the terminal equality
    ``x(N) = Pi_X((phase_end + t) mod p)`` on a given orbit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (FiniteModel, PeriodicOrbit, SystemModel, Trajectory, _vec,
                   orbit_distance)
from .discount import WeightSchedule, weights
from .ocp import GridSolver, GridSpec, OcpInfeasible, OcpSolution, solve_finite

RECURRENCE_TOL = 1e-8
P_MAX = 10


@dataclass(frozen=True)
class Scheme:
    kind: str = "discounted"
    p: int = 1
    phase_end: int = 0
    orbit: Optional[PeriodicOrbit] = None

    def __post_init__(self):
        if self.kind not in ("discounted", "pstep", "terminal"):
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.kind == "pstep" and self.p < 1:
            raise ValueError("p-step scheme needs p >= 1")
        if self.kind == "terminal" and self.orbit is None:
            raise ValueError("terminal scheme needs the orbit to pin")

    @property
    def label(self) -> str:
        if self.kind == "pstep":
            return f"pstep:{self.p}"
        if self.kind == "terminal":
            return f"terminal:{self.phase_end}"
        return "discounted"

    def terminal_at(self, t: int):
        if self.kind != "terminal":
            return None
        return self.orbit.states[(self.phase_end + t) % self.orbit.period]


DISCOUNTED = Scheme()


@dataclass(frozen=True)
class Limit:
    onset: int
    period: int
    orbit: PeriodicOrbit


@dataclass
class ClosedLoopRun:
    trajectory: Trajectory
    scheme: Scheme
    schedule: WeightSchedule
    horizon: int
    limit: Optional[Limit] = None
    status: str = "ok"
    plans: list = field(default_factory=list, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status == "ok"


@dataclass
class PerformanceRecord:
    N: int
    discount: str
    j_inf_av: float
    gap: float
    transient: dict = field(default_factory=dict)
    onset: Optional[int] = None
    period: Optional[int] = None
    status: str = "ok"
    wall_ms: Optional[float] = None


class NoLimitDetected(RuntimeError):
    pass


class RunTooShort(ValueError):
    pass


class Controller:
    """Receding-horizon feedback for one (model, schedule, N, scheme).

    Solutions are memoised on the exact measured state (and the terminal
    target), which is sound because every solve is a deterministic function
    of those inputs.
    """

    def __init__(self, model: SystemModel, schedule: WeightSchedule, N: int,
                 scheme: Scheme = DISCOUNTED, grid: Optional[GridSpec] = None):
        self.model = model
        self.schedule = schedule
        self.N = N
        self.scheme = scheme
        self.weights = weights(schedule, N)
        self._grid = None if isinstance(model, FiniteModel) else GridSolver(model, self.weights, grid)
        self._memo: dict = {}

    def solve(self, x, t: int = 0) -> OcpSolution:
        terminal = self.scheme.terminal_at(t)
        key = (x, terminal)
        if key in self._memo:
            return self._memo[key]
        if self._grid is None:
            sol = solve_finite(self.model, list(self.weights), x, terminal)
        else:
            sol = self._grid.solve(x, terminal)
        self._memo[key] = sol
        return sol

    def __call__(self, x, t: int = 0):
        sol = self.solve(x, t)
        return sol.inputs[0], sol


def mpc_step(model: SystemModel, schedule: WeightSchedule, N: int, x, scheme: Scheme = DISCOUNTED,
             t: int = 0, grid: Optional[GridSpec] = None):
    """First optimal input at ``x`` and the underlying OCP solution."""
    return Controller(model, schedule, N, scheme, grid)(x, t)


def simulate(model: SystemModel, schedule: WeightSchedule, N: int, x0, T: int,
             scheme: Scheme = DISCOUNTED, grid: Optional[GridSpec] = None,
             tol: float = RECURRENCE_TOL, p_max: int = P_MAX,
             stop_after: Optional[int] = None, controller: Optional[Controller] = None
             ) -> ClosedLoopRun:
    """Closed loop of length ``T`` from ``x0``.

    With ``stop_after`` set, the run ends early once the recorded tail has
    recurred (within ``tol``, period at most ``p_max``) for ``stop_after``
    consecutive steps.  Infeasibility truncates the run and is reported in
    ``status``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    ctrl = controller or Controller(model, schedule, N, scheme, grid)
    states = [x0]
    inputs, costs, plans = [], [], []
    status = "ok"
    x = x0
    plan: tuple = ()
    for t in range(T):
        if scheme.kind == "pstep":
            if t % scheme.p == 0:
                try:
                    plan = ctrl.solve(x, t).inputs
                except OcpInfeasible:
                    status = f"infeasible at t={t}"
                    break
                plans.append((t, plan))
            u = plan[min(t % scheme.p, len(plan) - 1)]
        else:
            try:
                sol = ctrl.solve(x, t)
            except OcpInfeasible:
                status = f"infeasible at t={t}"
                break
            plans.append((t, sol.inputs))
            u = sol.inputs[0]
        costs.append(model.cost(x, u))
        x = model.step(x, u)
        inputs.append(u)
        states.append(x)
        if stop_after and len(inputs) >= 2 * p_max + stop_after and _settled(
                states, inputs, tol, p_max, stop_after):
            break
    run = ClosedLoopRun(Trajectory(states, inputs, costs), scheme, schedule, N,
                        status=status, plans=plans)
    if len(inputs) >= 2:
        run.limit = detect_period(run, tol, p_max)
    return run


def simulate_until_periodic(model, schedule, N, x0, scheme: Scheme = DISCOUNTED,
                            grid: Optional[GridSpec] = None, T: int = 200, T_max: int = 1600,
                            tol: float = RECURRENCE_TOL, p_max: int = P_MAX,
                            stop_after: Optional[int] = None) -> ClosedLoopRun:
    """Double the run length until a limit is detected (or ``T_max`` is hit)."""
    ctrl = Controller(model, schedule, N, scheme, grid)
    while True:
        run = simulate(model, schedule, N, x0, T, scheme, tol=tol, p_max=p_max,
                       stop_after=stop_after, controller=ctrl)
        if run.limit is not None or not run.feasible or T >= T_max:
            return run
        T = min(2 * T, T_max)


def _gaps(states, inputs, p: int) -> np.ndarray:
    """``max(|x(t+p)-x(t)|, |u(t+p)-u(t)|)`` for ``t = 0 .. T-p-1``."""
    T = len(inputs)
    out = np.empty(max(T - p, 0))
    for t in range(T - p):
        dx = np.linalg.norm(_vec(states[t + p]) - _vec(states[t]))
        du = np.linalg.norm(_vec(inputs[t + p]) - _vec(inputs[t]))
        out[t] = max(dx, du)
    return out


def _settled(states, inputs, tol, p_max, window) -> bool:
    T = len(inputs)
    for p in range(1, p_max + 1):
        tail_s = states[T - p - window:]
        tail_u = inputs[T - p - window:]
        if len(tail_u) < p + window:
            continue
        if np.all(_gaps(tail_s, tail_u, p) <= tol):
            return True
    return False


def _phase_mean(values):
    if all(v == values[0] for v in values):
        return values[0]
    arr = np.asarray(values, dtype=float)
    # rounding in the mean must not leave the sampled range (box edges)
    mean = np.clip(np.mean(arr, axis=0), arr.min(axis=0), arr.max(axis=0))
    if np.ndim(values[0]) == 0:
        return float(mean)
    return tuple(float(v) for v in mean)


def detect_period(run: ClosedLoopRun, tol: float = RECURRENCE_TOL, p_max: int = P_MAX) -> Optional[Limit]:
    """Smallest period ``p <= p_max`` and earliest onset of recurrence within ``tol``.

    At least two full periods must be observed after the onset.  The returned
    orbit averages each phase over all recurrences; exactly repeating values
    (e.g. finite-model labels) are kept as they are.
    """
    traj = run.trajectory
    states, inputs = traj.states, traj.inputs
    T = len(inputs)
    for p in range(1, p_max + 1):
        if T - p < p:
            break
        ok = _gaps(states, inputs, p) <= tol
        bad = np.flatnonzero(~ok)
        t0 = 0 if bad.size == 0 else int(bad[-1]) + 1
        if T - p - t0 < p:
            continue
        points = []
        for k in range(p):
            idx = range(t0 + k, T, p)
            points.append((_phase_mean([states[i] for i in idx]),
                           _phase_mean([inputs[i] for i in idx])))
        return Limit(t0, p, PeriodicOrbit(points))
    return None


def asymptotic_average(run: ClosedLoopRun) -> float:
    """Mean stage cost over the last detected period."""
    if run.limit is None:
        raise NoLimitDetected("no periodic limit detected; lengthen the run")
    p = run.limit.period
    costs = run.trajectory.costs
    return math.fsum(costs[len(costs) - p:]) / p


def transient_cost(run: ClosedLoopRun, T: int) -> float:
    """Sum of the first ``T`` closed-loop stage costs."""
    costs = run.trajectory.costs
    if T > len(costs):
        raise RunTooShort(f"run has {len(costs)} steps, {T} requested")
    return math.fsum(costs[:T])


def performance(run: ClosedLoopRun, ell_star: float, transient_T=()) -> PerformanceRecord:
    name = getattr(run.schedule, "label", str(run.schedule))
    transient = {T: transient_cost(run, T) for T in transient_T if T <= len(run.trajectory)}
    if run.limit is None:
        status = run.status if not run.feasible else "no-limit"
        return PerformanceRecord(run.horizon, name, math.nan, math.nan, transient, status=status)
    j = asymptotic_average(run)
    return PerformanceRecord(run.horizon, name, j, j - ell_star, transient,
                             run.limit.onset, run.limit.period, run.status)


def max_orbit_distance(run: ClosedLoopRun, orbit: PeriodicOrbit, start: int = 0) -> float:
    traj = run.trajectory
    return max((orbit_distance(orbit, x, u)
                for x, u in zip(traj.states[start:-1], traj.inputs[start:])), default=0.0)
