"""Discounted finite-horizon optimal control problems.

Minimise ``sum_k w[k] * ell(x(k), u(k))`` over feasible input sequences of
length ``N = len(w)``, optionally with a terminal equality ``x(N) = x_T``.

Finite models are solved exactly by backward dynamic programming.  Scalar
models are solved by gridded dynamic programming (linear interpolation of the
value function between state nodes) followed by a cyclic coordinate-descent
polish of the input sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (FiniteModel, ScalarModel, StorageFunction, Trajectory, rollout,
                   rotated_model)
from .linesearch import golden_section

# cell fractions closer than this to a node are snapped onto it
_SNAP = 1e-9
# rows per block in the gridded backup, bounds memory for fine grids
_CHUNK_ELEMENTS = 4_000_000


class OcpInfeasible(RuntimeError):
    """No feasible input sequence exists (or none was found on the grid)."""


@dataclass(frozen=True)
class GridSpec:
    state_nodes: int = 2001
    input_nodes: int = 401
    refinement_tol: float = 1e-13
    max_refine_iters: int = 500

    def __post_init__(self):
        if self.state_nodes < 2 or self.input_nodes < 2:
            raise ValueError("grids need at least 2 nodes")
        if not self.refinement_tol >= 0:
            raise ValueError("refinement_tol must be >= 0 (0 disables refinement)")
        if self.max_refine_iters < 0:
            raise ValueError("max_refine_iters must be >= 0")


@dataclass(frozen=True)
class OcpSolution:
    trajectory: Trajectory
    value: float
    weighted_costs: tuple
    info: dict = field(default_factory=dict, compare=False)

    @property
    def inputs(self):
        return self.trajectory.inputs

    @property
    def states(self):
        return self.trajectory.states

    @property
    def horizon(self) -> int:
        return len(self.trajectory)


def _make_solution(traj: Trajectory, weights, info: dict, exact: bool = False) -> OcpSolution:
    wc = tuple(w * c for w, c in zip(weights, traj.costs))
    if exact:
        value = sum(wc[1:], wc[0]) if wc else 0
    else:
        wc = tuple(float(v) for v in wc)
        value = math.fsum(wc)
    return OcpSolution(traj, value, wc, info)


# --------------------------------------------------------------------------
# finite models


def solve_finite(model: FiniteModel, weights: Sequence, x0, terminal=None) -> OcpSolution:
    """Exact backward DP over the transition graph.

    Works with any number type supporting ``+``, ``*`` and ``<`` (floats,
    :class:`fractions.Fraction`).  Ties go to the lowest transition index.
    """
    if x0 not in model.states:
        raise ValueError(f"x0={x0!r} is not a state of the model")
    if terminal is not None and terminal not in model.states:
        raise ValueError(f"terminal={terminal!r} is not a state of the model")
    N = len(weights)
    outgoing = {s: [] for s in model.states}
    for t in model.transitions:
        outgoing[t.state].append(t)

    zero = weights[0] * 0 if N else 0
    value = {s: (zero if terminal is None or s == terminal else None) for s in model.states}
    policy = []
    for k in reversed(range(N)):
        w = weights[k]
        new_value, choice = {}, {}
        for s in model.states:
            best = None
            pick = None
            for t in outgoing[s]:
                tail = value[t.next_state]
                if tail is None:
                    continue
                v = w * t.cost + tail
                if best is None or v < best:
                    best, pick = v, t
            new_value[s] = best
            choice[s] = pick
        value = new_value
        policy.append(choice)
    policy.reverse()
    if value[x0] is None:
        raise OcpInfeasible(f"no feasible {N}-step sequence from {x0!r}"
                            + (f" to {terminal!r}" if terminal is not None else ""))

    x = x0
    inputs = []
    for k in range(N):
        t = policy[k][x]
        inputs.append(t.input)
        x = t.next_state
    traj = rollout(model, x0, inputs)
    return _make_solution(traj, list(weights), {"solver": "finite-dp"}, exact=True)


# --------------------------------------------------------------------------
# scalar models


class GridSolver:
    """Gridded DP for one (model, weights, grid) triple.

    The backward value tables do not depend on the initial state, so they are
    computed once per terminal target and reused by every :meth:`solve`.
    """

    def __init__(self, model: ScalarModel, weights: Sequence[float], grid: Optional[GridSpec] = None):
        self.model = model
        self.weights = np.asarray(weights, dtype=float)
        self.grid = grid or GridSpec()
        x_lo, x_hi = model.x_bounds
        self.xs = np.linspace(x_lo, x_hi, self.grid.state_nodes)
        self.us = np.linspace(*model.u_bounds, self.grid.input_nodes)
        self.h = (x_hi - x_lo) / (self.grid.state_nodes - 1)
        self._tables: dict = {}
        self._pre = None

    @property
    def horizon(self) -> int:
        return len(self.weights)

    def interp(self, V: np.ndarray, xq) -> np.ndarray:
        """Linear interpolation of node values; inf outside the box or next to an inf node."""
        x_lo, x_hi = self.model.x_bounds
        tol = self.model.box_tol
        xq = np.asarray(xq, dtype=float)
        t = (xq - x_lo) / self.h
        i = np.floor(t)
        a = t - i
        up = a > 1.0 - _SNAP
        i = np.where(up, i + 1, i)
        a = np.where(up | (a < _SNAP), 0.0, a)
        last = len(V) - 1
        i = np.clip(i, 0, last).astype(np.intp)
        j = np.minimum(i + 1, last)
        lo_v, hi_v = V[i], V[j]
        with np.errstate(invalid="ignore"):
            val = np.where(a == 0.0, lo_v, (1.0 - a) * lo_v + a * hi_v)
        inside = (xq >= x_lo - tol) & (xq <= x_hi + tol)
        return np.where(inside & ~np.isnan(val), val, np.inf)

    def _block_rows(self) -> int:
        return max(1, _CHUNK_ELEMENTS // len(self.us))

    def _precomputed(self):
        # successor interpolation data shared by every stage, if it fits in memory
        if self._pre is None and len(self.xs) * len(self.us) <= _CHUNK_ELEMENTS:
            X = self.xs[:, None]
            U = self.us[None, :]
            with np.errstate(all="ignore"):
                F = np.asarray(self.model.f(X, U), dtype=float) * np.ones_like(U)
                L = np.asarray(self.model.ell(X, U), dtype=float) * np.ones_like(U)
            self._pre = (F, L)
        return self._pre

    def _backup(self, k: int, V_next: np.ndarray) -> np.ndarray:
        w = self.weights[k]
        out = np.empty(len(self.xs))
        pre = self._precomputed()
        step = self._block_rows() if pre is None else len(self.xs)
        for r0 in range(0, len(self.xs), step):
            rows = slice(r0, r0 + step)
            if pre is None:
                X = self.xs[rows, None]
                U = self.us[None, :]
                with np.errstate(all="ignore"):
                    F = np.asarray(self.model.f(X, U), dtype=float) * np.ones_like(U)
                    L = np.asarray(self.model.ell(X, U), dtype=float) * np.ones_like(U)
            else:
                F, L = pre[0][rows], pre[1][rows]
            with np.errstate(invalid="ignore"):
                Q = w * L + self.interp(V_next, F)
            Q[~np.isfinite(L)] = np.inf
            out[rows] = Q.min(axis=1)
        return out

    def _terminal_stage(self, terminal: float) -> np.ndarray:
        k = self.horizon - 1
        u = self._inputs_to(self.xs, terminal)
        with np.errstate(all="ignore"):
            L = np.asarray(self.model.ell(self.xs, np.where(np.isnan(u), self.us[0], u)), dtype=float)
        ok = ~np.isnan(u) & np.isfinite(L)
        return np.where(ok, self.weights[k] * np.where(ok, L, 0.0), np.inf)

    def _inputs_to(self, xs: np.ndarray, target: float) -> np.ndarray:
        m = self.model
        u_lo, u_hi = m.u_bounds
        if m.input_for is not None:
            u = np.asarray(m.input_for(xs, target), dtype=float) * np.ones_like(xs)
            tol = 8 * np.finfo(float).eps * max(1.0, abs(u_lo), abs(u_hi))
            ok = (u >= u_lo - tol) & (u <= u_hi + tol)
            return np.where(ok, np.clip(u, u_lo, u_hi), np.nan)
        return np.array([np.nan if (v := m.solve_input(float(x), target)) is None else v for x in xs])

    def tables(self, terminal: Optional[float] = None) -> list:
        """Value tables ``V[1..N]`` on the state nodes (index 0 unused)."""
        key = None if terminal is None else float(terminal)
        if key in self._tables:
            return self._tables[key]
        N = self.horizon
        V: list = [None] * (N + 1)
        V[N] = np.zeros(len(self.xs))
        start = N - 1
        if key is not None and N >= 2:
            V[N - 1] = self._terminal_stage(key)
            start = N - 2
        for k in range(start, 0, -1):
            V[k] = self._backup(k, V[k + 1])
        self._tables[key] = V
        return V

    def grid_solution(self, x0: float, terminal: Optional[float] = None) -> OcpSolution:
        """Forward pass through the gridded policy from an arbitrary real ``x0``."""
        m = self.model
        if not m.in_x(x0):
            raise ValueError(f"x0={x0!r} outside the state box")
        N = self.horizon
        V = self.tables(terminal)
        x = m.clip_x(float(x0))
        inputs = []
        for k in range(N):
            if terminal is not None and k == N - 1:
                u = m.solve_input(x, terminal)
                if u is None or not math.isfinite(m.cost(x, u)):
                    raise OcpInfeasible(f"terminal state {terminal!r} not reachable from {x!r}")
            else:
                with np.errstate(all="ignore"):
                    F = np.asarray(m.f(x, self.us), dtype=float) * np.ones_like(self.us)
                    L = np.asarray(m.ell(x, self.us), dtype=float) * np.ones_like(self.us)
                    q = self.weights[k] * L + self.interp(V[k + 1], F)
                q[~np.isfinite(L)] = np.inf
                idx = int(np.argmin(q))
                if not math.isfinite(q[idx]):
                    raise OcpInfeasible(f"no grid-feasible continuation at stage {k} from x={x!r}")
                u = float(self.us[idx])
            inputs.append(u)
            x = m.step(x, u)
        traj = rollout(m, m.clip_x(float(x0)), inputs)
        info = {"solver": "grid-dp", "state_nodes": len(self.xs), "input_nodes": len(self.us),
                "refine_iters": 0, "converged": True}
        return _make_solution(traj, self.weights, info)

    def solve(self, x0: float, terminal: Optional[float] = None) -> OcpSolution:
        sol = self.grid_solution(x0, terminal)
        if self.grid.refinement_tol > 0 and math.isfinite(self.grid.refinement_tol):
            sol = refine(self.model, self.weights, sol, self.grid.refinement_tol,
                         max_iters=self.grid.max_refine_iters, terminal=terminal)
        return sol


def solve_grid(model: ScalarModel, weights: Sequence[float], x0: float,
               grid: Optional[GridSpec] = None, terminal: Optional[float] = None) -> OcpSolution:
    """Gridded DP followed by :func:`refine` (skipped when ``refinement_tol`` is 0)."""
    return GridSolver(model, weights, grid).solve(x0, terminal)


# --------------------------------------------------------------------------
# refinement


class _Objective:
    """Incremental evaluation of the weighted cost along one input coordinate."""

    def __init__(self, model: ScalarModel, weights, x0: float, inputs, terminal):
        self.m = model
        self.w = [float(v) for v in weights]
        self.x0 = float(x0)
        self.terminal = terminal
        self.N = len(self.w)
        self.u = [float(v) for v in inputs]
        self.reset()

    def reset(self):
        m, N = self.m, self.N
        xs = [self.x0]
        wc = []
        x = self.x0
        for k in range(N):
            u = self.u[k]
            if self.terminal is not None and k == N - 1:
                u = m.solve_input(x, self.terminal)
                if u is None:
                    raise OcpInfeasible("terminal state not reachable from the warm start")
                self.u[k] = u
            c = m.cost(x, u)
            if not math.isfinite(c):
                raise OcpInfeasible("warm start has undefined stage cost")
            wc.append(self.w[k] * c)
            x = m.step(x, u)
            xs.append(x)
        self.xs = xs
        self.wc = wc
        self.prefix = [0.0]
        for v in wc:
            self.prefix.append(self.prefix[-1] + v)
        self.total = self.prefix[-1]

    def along(self, k: int, v: float) -> float:
        """Cost of stages ``k..N-1`` with ``u[k]`` replaced by ``v`` (inf if infeasible)."""
        m, N, w = self.m, self.N, self.w
        f, ell = m.f, m.ell
        x_lo, x_hi = m.x_bounds
        tol = m.box_tol
        terminal = self.terminal
        xs_old = self.xs
        x = xs_old[k]
        acc = 0.0
        for j in range(k, N):
            if j > k and x == xs_old[j]:
                return acc + (self.total - self.prefix[j])
            if terminal is not None and j == N - 1:
                uj = m.solve_input(x, terminal)
                if uj is None:
                    return math.inf
            else:
                uj = v if j == k else self.u[j]
            c = float(ell(x, uj))
            if not c < math.inf:
                return math.inf
            xn = float(f(x, uj))
            if xn < x_lo - tol or xn > x_hi + tol:
                return math.inf
            acc += w[j] * c
            x = min(max(xn, x_lo), x_hi)
        return acc

    def set(self, k: int, v: float):
        self.u[k] = v
        self.reset()


def _feasible_edge(phi, inside: float, outside: float) -> float:
    """Bisect for the last feasible point between ``inside`` and ``outside``."""
    if math.isfinite(phi(outside)):
        return outside
    a, b = inside, outside
    resolution = 4 * np.finfo(float).eps * max(1.0, abs(inside), abs(outside))
    while abs(b - a) > resolution:
        mid = 0.5 * (a + b)
        if math.isfinite(phi(mid)):
            a = mid
        else:
            b = mid
    return a


def _newton_polish(phi, x: float, fx: float, lo: float, hi: float, iters: int = 8):
    scale = max(1.0, abs(x))
    h = 1e-4 * scale
    for _ in range(iters):
        if x - h < lo or x + h > hi:
            break
        fp, fm = phi(x + h), phi(x - h)
        d2 = (fp - 2.0 * fx + fm) / (h * h)
        if not (math.isfinite(d2) and d2 > 0):
            break
        d1 = (fp - fm) / (2.0 * h)
        step = -d1 / d2
        xn = min(max(x + step, lo), hi)
        fn = phi(xn)
        # below roundoff the objective cannot arbitrate; trust the derivative
        slack = 16 * np.finfo(float).eps * max(1.0, abs(fx))
        if not fn <= fx + (slack if abs(step) < 1e-6 * scale else 0.0):
            break
        x, fx = xn, fn
        if abs(step) < 1e-13 * scale:
            break
    return x, fx


def refine(model: ScalarModel, weights: Sequence[float], warm_start: OcpSolution, tol: float,
           max_iters: int = 500, terminal: Optional[float] = None,
           step_tol: float = 1e-9) -> OcpSolution:
    """Cyclic coordinate descent on the input sequence.

    Each coordinate is minimised by golden-section search over the interval
    of values that keeps every downstream state in the box and every cost
    finite, followed by a Newton polish on smooth interior minima.  A sweep
    loop stops once a sweep lowers the objective by less than ``tol`` and no
    input moved by more than ``step_tol`` (relative).  The result is never
    worse than ``warm_start``.
    """
    if not math.isfinite(tol):
        return warm_start
    N = len(weights)
    obj = _Objective(model, weights, warm_start.states[0], warm_start.inputs, terminal)
    free = N - 1 if terminal is not None else N
    u_lo, u_hi = model.u_bounds
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        before = obj.total
        max_step = 0.0
        for k in range(free):
            def phi(v, k=k):
                return obj.along(k, v)

            v0 = obj.u[k]
            f0 = obj.total - obj.prefix[k]
            lo = _feasible_edge(phi, v0, u_lo)
            hi = _feasible_edge(phi, v0, u_hi)
            span = hi - lo
            if span <= 0:
                continue
            v, fv, _ = golden_section(phi, lo, hi, tol=1e-7 * span)
            if lo < v < hi:
                v, fv = _newton_polish(phi, v, fv, lo, hi)
            if fv < f0 or (fv <= f0 + 16 * np.finfo(float).eps * max(1.0, abs(f0))
                           and abs(v - v0) < 1e-6 * max(1.0, abs(v0)) and lo < v < hi):
                if v != v0:
                    max_step = max(max_step, abs(v - v0) / max(1.0, abs(v0)))
                    obj.set(k, v)
        if before - obj.total < tol and max_step <= step_tol:
            converged = True
            break

    traj = rollout(model, obj.x0, obj.u)
    info = dict(warm_start.info)
    info.update(refine_iters=sweeps, converged=converged)
    sol = _make_solution(traj, weights, info)
    if sol.value > warm_start.value:
        return replace(warm_start, info=info)
    return sol


# --------------------------------------------------------------------------


def rotated_solve(model, storage: StorageFunction, ell_star: float, weights, x0,
                  grid: Optional[GridSpec] = None, terminal=None) -> OcpSolution:
    """Solve with the stage cost replaced by the rotated cost."""
    rot = rotated_model(model, storage, ell_star)
    if isinstance(model, FiniteModel):
        return solve_finite(rot, weights, x0, terminal)
    return solve_grid(rot, weights, x0, grid, terminal)


def solve(model, weights, x0, grid: Optional[GridSpec] = None, terminal=None) -> OcpSolution:
    """Dispatch on the model kind."""
    if isinstance(model, FiniteModel):
        return solve_finite(model, weights, x0, terminal)
    return solve_grid(model, weights, x0, grid, terminal)
