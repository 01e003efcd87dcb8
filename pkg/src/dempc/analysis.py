"""Empirical diagnostics: turnpike counts, weighted averages, storage synthesis
and the decrease of the rotated value function along the closed loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (FiniteModel, PeriodicOrbit, ScalarModel, StorageFunction,
                   SystemModel, Transition, orbit_distance, rotated_cost, rotated_model)
from .discount import WeightSchedule, weights as stage_weights
from .mpc import Controller
from .ocp import GridSolver, GridSpec, OcpSolution, solve, solve_finite
from .simplex import linprog

STORAGE_BOUND = 1e3


class InfeasibleLP(ValueError):
    """No storage function exists within the bounds."""


# --------------------------------------------------------------------------
# turnpike


def turnpike_count(sol: OcpSolution, orbit: PeriodicOrbit, eps: float) -> int:
    """Number of stages ``k < N`` whose pair ``(x*(k), u*(k))`` lies within ``eps`` of the orbit."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return sum(orbit_distance(orbit, x, u) <= eps for x, u in zip(sol.states, sol.inputs))


@dataclass
class TurnpikeReport:
    """Counts ``Q[(N, eps)]`` and deficits ``d = (N - Q) / sqrt(N)``."""

    counts: dict
    N_list: tuple
    eps_list: tuple

    @property
    def deficits(self) -> dict:
        return {(N, e): (N - q) / math.sqrt(N) for (N, e), q in self.counts.items()}

    def d_max(self, eps: float) -> float:
        """Empirical surrogate for the turnpike constant at ``eps``."""
        d = self.deficits
        return max(d[(N, eps)] for N in self.N_list)

    def to_dict(self) -> dict:
        d = self.deficits
        return {
            "N": list(self.N_list),
            "eps": list(self.eps_list),
            "rows": [{"N": N, "eps": e, "Q": self.counts[(N, e)], "d": d[(N, e)]}
                     for N in self.N_list for e in self.eps_list],
            "d_max": {str(e): self.d_max(e) for e in self.eps_list},
        }


def turnpike_profile(model: SystemModel, schedule: WeightSchedule, x0, N_list: Sequence[int],
                     eps_list: Sequence[float], orbit: PeriodicOrbit,
                     grid: Optional[GridSpec] = None) -> TurnpikeReport:
    """Solve the OCP for each horizon and tabulate turnpike counts."""
    counts = {}
    for N in N_list:
        sol = solve(model, stage_weights(schedule, N), x0, grid)
        for eps in eps_list:
            counts[(N, eps)] = turnpike_count(sol, orbit, eps)
    return TurnpikeReport(counts, tuple(N_list), tuple(eps_list))


def average_residual(sol: OcpSolution, weights: Sequence[float],
                     g: Callable, orbit: PeriodicOrbit) -> float:
    """``|g* - sum_{k=1}^{N-1} (w[k-1] - w[k]) g(x*(k), u*(k))|`` with ``g*`` the orbit mean of ``g``."""
    w = np.asarray(weights, dtype=float)
    if len(w) != sol.horizon:
        raise ValueError(f"{len(w)} weights for a horizon-{sol.horizon} solution")
    g_star = math.fsum(float(g(x, u)) for x, u in orbit.points) / orbit.period
    total = math.fsum((w[k - 1] - w[k]) * float(g(sol.states[k], sol.inputs[k]))
                      for k in range(1, len(w)))
    return abs(g_star - total)


# --------------------------------------------------------------------------
# storage synthesis


def _orbit_transitions(model: FiniteModel, orbit: PeriodicOrbit) -> set:
    p = orbit.period
    on = set()
    for k, (x, u) in enumerate(orbit.points):
        t = model.transition(x, u)
        if t.next_state != orbit.points[(k + 1) % p][0]:
            raise ValueError("orbit is not a cycle of the model")
        on.add((x, u))
    return on


def find_storage_lp(model: FiniteModel, orbit: PeriodicOrbit, ell_star: float,
                    bound: float = STORAGE_BOUND):
    """Storage function maximising the dissipation margin on a finite model.

    Solves ``max m`` subject to ``ell - ell_star + lambda(x) - lambda(x+) >= m``
    on off-orbit transitions, equality with 0 on orbit transitions,
    ``lambda(anchor) = 0`` for the first orbit state, ``|lambda| <= bound`` and
    ``m >= 0``.  Among the maximisers the one with least ``sum |lambda|`` is
    returned.

    Returns
    -------
    (StorageFunction, margin)

    Raises
    ------
    InfeasibleLP
        If no such storage exists (e.g. a cheaper cycle than ``orbit``).
    """
    on = _orbit_transitions(model, orbit)
    states = list(model.states)
    pos = {s: i for i, s in enumerate(states)}
    n = len(states)
    off = [t for t in model.transitions if (t.state, t.input) not in on]
    anchor = pos[orbit.points[0][0]]

    # variables: lambda (n), margin
    A_eq, b_eq = [], []
    for t in model.transitions:
        if (t.state, t.input) in on:
            row = np.zeros(n + 1)
            row[pos[t.state]] += 1.0
            row[pos[t.next_state]] -= 1.0
            A_eq.append(row)
            b_eq.append(ell_star - t.cost)
    row = np.zeros(n + 1)
    row[anchor] = 1.0
    A_eq.append(row)
    b_eq.append(0.0)

    A_ub, b_ub = [], []
    for t in off:
        row = np.zeros(n + 1)
        row[pos[t.state]] -= 1.0
        row[pos[t.next_state]] += 1.0
        row[n] = 1.0
        A_ub.append(row)
        b_ub.append(t.cost - ell_star)

    bounds = [(-bound, bound)] * n + [(0.0, None if off else 0.0)]
    c = np.zeros(n + 1)
    c[n] = -1.0
    res = linprog(c, A_ub or None, b_ub or None, A_eq, b_eq, bounds)
    if res.status == "infeasible":
        raise InfeasibleLP("no storage function with nonnegative margin exists")
    if not res.success:
        raise RuntimeError(f"storage LP failed: {res.status}")
    margin = float(res.x[n])

    # among maximisers pick the smallest storage: lambda = pos - neg, min sum(pos + neg)
    A_eq2 = [np.concatenate([r[:n], -r[:n], [r[n]]]) for r in A_eq]
    A_ub2 = [np.concatenate([r[:n], -r[:n], [r[n]]]) for r in A_ub]
    bounds2 = [(0.0, bound)] * (2 * n) + [(margin, margin)]
    c2 = np.concatenate([np.ones(2 * n), [0.0]])
    res2 = linprog(c2, A_ub2 or None, b_ub or None, A_eq2, b_eq, bounds2)
    lam = res2.x[:n] - res2.x[n:2 * n] if res2.success else res.x[:n]
    storage = StorageFunction({s: float(lam[pos[s]]) for s in states})
    return storage, margin


def certificate_errors(model: FiniteModel, orbit: PeriodicOrbit, ell_star: float,
                       storage: StorageFunction):
    """Rotated cost on orbit transitions and the minimum off the orbit.

    Returns ``(max |l~| on orbit, min l~ off orbit)``; the latter is inf when
    every transition is on the orbit.
    """
    on = _orbit_transitions(model, orbit)
    on_err, off_min = 0.0, math.inf
    for t in model.transitions:
        val = rotated_cost(model, storage, ell_star, t.state, t.input)
        if (t.state, t.input) in on:
            on_err = max(on_err, abs(val))
        else:
            off_min = min(off_min, val)
    return on_err, off_min


def grid_abstraction(model: ScalarModel, state_nodes: int = 21, input_nodes: int = 21,
                     snap_tol: float = 1e-9) -> FiniteModel:
    """Finite model on uniform state nodes with the transitions that land on a node.

    A node/input pair is kept when ``f(x, u)`` lies within ``snap_tol`` (relative
    to the node spacing) of a node and both the successor and the stage cost
    are admissible.  States are the node indices' values rounded to 12 digits.
    """
    x_lo, x_hi = model.x_bounds
    xs = np.linspace(x_lo, x_hi, state_nodes)
    us = np.linspace(*model.u_bounds, input_nodes)
    h = xs[1] - xs[0]
    labels = [round(float(x), 12) for x in xs]
    transitions = []
    for i, x in enumerate(xs):
        for u in us:
            with np.errstate(all="ignore"):
                x_next = float(model.f(float(x), float(u)))
                cost = float(model.ell(float(x), float(u)))
            if not math.isfinite(cost) or not model.in_x(x_next):
                continue
            j = int(round((x_next - x_lo) / h))
            if 0 <= j < state_nodes and abs(x_next - xs[j]) <= snap_tol * h:
                transitions.append(Transition(labels[i], round(float(u), 12), labels[j], cost))
    return FiniteModel(labels, transitions, name=model.name + f"-grid{state_nodes}")


def gridded_storage_lp(model: ScalarModel, orbit: PeriodicOrbit, ell_star: float,
                       state_nodes: int = 21, input_nodes: int = 21):
    """Storage for a scalar model from the LP on :func:`grid_abstraction`.

    The orbit must sit on the nodes.  The node values are interpolated
    piecewise linearly.

    Returns
    -------
    (StorageFunction, margin, FiniteModel)
    """
    fin = grid_abstraction(model, state_nodes, input_nodes)
    snapped = PeriodicOrbit([(round(float(x), 12), round(float(u), 12)) for x, u in orbit.points])
    storage, margin = find_storage_lp(fin, snapped, ell_star)
    nodes = fin.states
    gridded = StorageFunction([storage(s) for s in nodes], nodes=nodes)
    return gridded, margin, fin


# --------------------------------------------------------------------------
# Lyapunov decrease


@dataclass
class DecreaseProfile:
    """Worst residual ``V~(x+) - V~(x) + l~(x, mu(x))`` per horizon."""

    delta: dict
    samples: tuple
    residuals: dict = field(default_factory=dict, repr=False)

    @property
    def N_list(self) -> list:
        return sorted(self.delta)

    def is_non_increasing(self, slack: float = 1e-9) -> bool:
        vals = [self.delta[N] for N in self.N_list]
        return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def decrease_profile(model: SystemModel, storage: StorageFunction, ell_star: float,
                     schedule: WeightSchedule, sample_states: Sequence, N_list: Sequence[int],
                     grid: Optional[GridSpec] = None) -> DecreaseProfile:
    """Empirical decrease of the rotated value function under the MPC feedback."""
    samples = tuple(sample_states)
    if not samples:
        raise ValueError("sample set is empty")
    rot = rotated_model(model, storage, ell_star)
    delta, residuals = {}, {}
    for N in N_list:
        w = stage_weights(schedule, N)
        ctrl = Controller(model, schedule, N, grid=grid)
        if isinstance(model, FiniteModel):
            def value(x):
                return solve_finite(rot, list(w), x).value
        else:
            solver = GridSolver(rot, w, grid)

            def value(x):
                return solver.solve(x).value
        res = []
        for x in samples:
            u, _ = ctrl(x)
            x_next = model.step(x, u)
            res.append(value(x_next) - value(x) + rotated_cost(model, storage, ell_star, x, u))
        residuals[N] = tuple(res)
        delta[N] = max(res)
    return DecreaseProfile(delta, samples, residuals)
