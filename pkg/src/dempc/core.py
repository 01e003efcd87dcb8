"""Domain types and elementary evaluations shared by solvers and diagnostics.

Two model flavours are supported:

* :class:`FiniteModel` -- a finite transition system given as a list of
  ``(state, input, next_state, cost)`` tuples.  States and inputs are real
  scalars or tuples of reals.
* :class:`ScalarModel` -- a scalar system ``x+ = f(x, u)`` with stage cost
  ``ell(x, u)`` and box constraints on state and input.  ``f`` and ``ell``
  must accept numpy arrays (broadcasting) as well as floats.  ``ell`` returns
  ``+inf`` wherever the cost is undefined.
"""
from __future__ import annotations

import math
from itertools import product
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence, Union

import networkx as nx
import numpy as np

CLOSURE_TOL = 1e-9
BOX_TOL = 1e-12


class InfeasiblePair(ValueError):
    """Raised when a state/input pair is not admissible for the model."""


class StorageLookupError(KeyError):
    """Raised when a storage function is queried outside its domain."""


@dataclass(frozen=True)
class Transition:
    state: Hashable
    input: Hashable
    next_state: Hashable
    cost: float


@dataclass(frozen=True)
class FiniteModel:
    """Finite transition system."""

    states: tuple
    transitions: tuple
    name: str = "finite"
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(self.states)
        transitions = tuple(
            t if isinstance(t, Transition) else Transition(*t) for t in self.transitions
        )
        known = set(states)
        index = {}
        for i, t in enumerate(transitions):
            if t.state not in known or t.next_state not in known:
                raise ValueError(f"transition {t} leaves the listed state set")
            if (t.state, t.input) in index:
                raise ValueError(f"duplicate transition for pair {(t.state, t.input)}")
            index[(t.state, t.input)] = i
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "_index", index)

    def transition(self, x, u) -> Transition:
        try:
            return self.transitions[self._index[(x, u)]]
        except KeyError:
            raise InfeasiblePair(f"no transition for (x={x!r}, u={u!r})") from None

    def out_transitions(self, x) -> list:
        """Transitions leaving ``x`` in index order."""
        return [t for t in self.transitions if t.state == x]

    def step(self, x, u):
        return self.transition(x, u).next_state

    def cost(self, x, u) -> float:
        return self.transition(x, u).cost

    def is_feasible(self, x, u) -> bool:
        return (x, u) in self._index


@dataclass(frozen=True)
class ScalarModel:
    """Scalar system with box constraints.

    Parameters
    ----------
    f, ell : callable
        Dynamics and stage cost, vectorised over numpy arrays.
    x_bounds, u_bounds : (float, float)
        State and input boxes.
    input_for : callable, optional
        ``input_for(x, x_next)`` returns the input steering ``x`` to
        ``x_next``.  Used to enforce terminal equalities exactly; a scalar
        root find is used when omitted.
    """

    f: Callable
    ell: Callable
    x_bounds: tuple
    u_bounds: tuple
    name: str = "scalar"
    input_for: Optional[Callable] = None

    def __post_init__(self):
        x_lo, x_hi = map(float, self.x_bounds)
        u_lo, u_hi = map(float, self.u_bounds)
        if not x_lo < x_hi:
            raise ValueError("state box must satisfy x_lo < x_hi")
        if not u_lo < u_hi:
            raise ValueError("input box must satisfy u_lo < u_hi")
        object.__setattr__(self, "x_bounds", (x_lo, x_hi))
        object.__setattr__(self, "u_bounds", (u_lo, u_hi))

    @property
    def box_tol(self) -> float:
        # rounding slack on the state box; successors inside it are clipped
        return BOX_TOL * max(1.0, self.x_bounds[1] - self.x_bounds[0])

    def in_x(self, x) -> bool:
        tol = self.box_tol
        return self.x_bounds[0] - tol <= x <= self.x_bounds[1] + tol

    def in_u(self, u) -> bool:
        return self.u_bounds[0] <= u <= self.u_bounds[1]

    def clip_x(self, x):
        return min(max(x, self.x_bounds[0]), self.x_bounds[1])

    def step(self, x, u) -> float:
        if not (self.in_x(x) and self.in_u(u)):
            raise InfeasiblePair(f"(x={x!r}, u={u!r}) violates the boxes")
        x_next = float(self.f(x, u))
        if not self.in_x(x_next):
            raise InfeasiblePair(f"f({x!r}, {u!r}) = {x_next!r} leaves the state box")
        return self.clip_x(x_next)

    def cost(self, x, u) -> float:
        return float(self.ell(x, u))

    def is_feasible(self, x, u) -> bool:
        if not (self.in_x(x) and self.in_u(u)):
            return False
        return self.in_x(float(self.f(x, u))) and math.isfinite(self.cost(x, u))

    def solve_input(self, x, x_next) -> Optional[float]:
        """Input ``u`` in the box with ``f(x, u) = x_next``, or None."""
        if self.input_for is not None:
            u = float(self.input_for(x, x_next))
        else:
            from scipy.optimize import brentq

            lo, hi = self.u_bounds
            g_lo = float(self.f(x, lo)) - x_next
            g_hi = float(self.f(x, hi)) - x_next
            if g_lo == 0.0:
                return lo
            if g_hi == 0.0:
                return hi
            if g_lo * g_hi > 0:
                return None
            u = brentq(lambda v: float(self.f(x, v)) - x_next, lo, hi, xtol=1e-15)
        return self.snap_u(u)

    def snap_u(self, u) -> Optional[float]:
        """``u`` moved onto the input box if it misses it by rounding only, else None."""
        lo, hi = self.u_bounds
        tol = 8 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi))
        if lo - tol <= u <= hi + tol:
            return min(max(u, lo), hi)
        return None


SystemModel = Union[FiniteModel, ScalarModel]


def _vec(v) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float)).ravel()


@dataclass(frozen=True)
class PeriodicOrbit:
    """A p-periodic sequence of ``(x, u)`` pairs closed under the dynamics."""

    points: tuple

    def __post_init__(self):
        pts = tuple((x, u) for x, u in self.points)
        if not pts:
            raise ValueError("an orbit needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def period(self) -> int:
        return len(self.points)

    @property
    def states(self) -> list:
        return [x for x, _ in self.points]

    def is_minimal(self) -> bool:
        return len(set(map(_key, self.states))) == self.period

    def closure_error(self, model: SystemModel) -> float:
        """Largest ``|f(Pi(k)) - Pi_X(k+1)|`` over the orbit."""
        worst = 0.0
        p = self.period
        for k, (x, u) in enumerate(self.points):
            x_next = model.step(x, u)
            target = self.points[(k + 1) % p][0]
            worst = max(worst, float(np.linalg.norm(_vec(x_next) - _vec(target))))
        return worst

    def is_closed(self, model: SystemModel, tol: float = CLOSURE_TOL) -> bool:
        try:
            return self.closure_error(model) <= tol
        except InfeasiblePair:
            return False


def _key(x):
    return tuple(_vec(x))


@dataclass(frozen=True)
class StorageFunction:
    """Storage function on a finite state set or on scalar grid nodes.

    For finite models ``values`` maps states to reals.  For scalar models pass
    ``nodes`` (increasing) and ``values`` as a sequence; evaluation then
    interpolates piecewise linearly.
    """

    values: object
    nodes: Optional[tuple] = None

    def __post_init__(self):
        if self.nodes is None:
            object.__setattr__(self, "values", dict(self.values))
        else:
            nodes = tuple(float(v) for v in self.nodes)
            vals = tuple(float(v) for v in self.values)
            if len(nodes) != len(vals) or len(nodes) < 2:
                raise ValueError("gridded storage needs matching nodes/values, at least 2")
            if any(b <= a for a, b in zip(nodes, nodes[1:])):
                raise ValueError("storage nodes must be strictly increasing")
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "values", vals)

    @property
    def bound(self) -> float:
        vals = self.values.values() if self.nodes is None else self.values
        return max(abs(v) for v in vals)

    def __call__(self, x):
        if self.nodes is None:
            try:
                return self.values[x]
            except KeyError:
                raise StorageLookupError(x) from None
        lo, hi = self.nodes[0], self.nodes[-1]
        xa = np.asarray(x, dtype=float)
        tol = 1e-12 * max(1.0, hi - lo)
        if np.any(xa < lo - tol) or np.any(xa > hi + tol):
            raise StorageLookupError(x)
        out = np.interp(xa, self.nodes, self.values)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Trajectory:
    """States ``x(0..K)``, inputs ``u(0..K-1)`` and stage costs ``ell(0..K-1)``."""

    states: tuple
    inputs: tuple
    costs: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.states) != len(self.inputs) + 1 or len(self.costs) != len(self.inputs):
            raise ValueError("trajectory needs K+1 states, K inputs and K costs")

    def __len__(self):
        return len(self.inputs)

    def check(self, model: SystemModel, tol: float = CLOSURE_TOL) -> bool:
        """Closure and feasibility of every recorded step."""
        for k, (x, u) in enumerate(zip(self.states, self.inputs)):
            if not model.is_feasible(x, u):
                return False
            x_next = model.step(x, u)
            if np.linalg.norm(_vec(x_next) - _vec(self.states[k + 1])) > tol:
                return False
        return True


def rollout(model: SystemModel, x0, inputs: Sequence) -> Trajectory:
    """Propagate ``inputs`` from ``x0``; raises :class:`InfeasiblePair`."""
    states = [x0]
    costs = []
    x = x0
    for u in inputs:
        c = model.cost(x, u)
        if not math.isfinite(c):
            raise InfeasiblePair(f"stage cost undefined at (x={x!r}, u={u!r})")
        x = model.step(x, u)
        costs.append(c)
        states.append(x)
    return Trajectory(states, list(inputs), costs)


def step_dynamics(model: SystemModel, x, u):
    """Return ``f(x, u)``; raises :class:`InfeasiblePair` for inadmissible pairs."""
    return model.step(x, u)


def orbit_distance(orbit: PeriodicOrbit, x, u) -> float:
    """Euclidean distance of the stacked pair ``(x, u)`` to the orbit."""
    z = np.concatenate([_vec(x), _vec(u)])
    return min(
        float(np.linalg.norm(z - np.concatenate([_vec(px), _vec(pu)])))
        for px, pu in orbit.points
    )


def orbit_average_cost(model: SystemModel, orbit: PeriodicOrbit) -> float:
    costs = [model.cost(x, u) for x, u in orbit.points]
    if not all(math.isfinite(c) for c in costs):
        raise InfeasiblePair("stage cost undefined on the orbit")
    return math.fsum(costs) / orbit.period


def rotated_cost(model: SystemModel, storage: StorageFunction, ell_star: float, x, u) -> float:
    """``ell(x,u) - ell_star + lambda(x) - lambda(f(x,u))``."""
    x_next = model.step(x, u)
    return model.cost(x, u) - ell_star + storage(x) - storage(x_next)


def rotated_model(model: SystemModel, storage: StorageFunction, ell_star: float) -> SystemModel:
    """Copy of ``model`` whose stage cost is the rotated cost."""
    if isinstance(model, FiniteModel):
        transitions = [
            Transition(t.state, t.input, t.next_state,
                       t.cost - ell_star + storage(t.state) - storage(t.next_state))
            for t in model.transitions
        ]
        return FiniteModel(model.states, transitions, name=model.name + "-rotated")

    x_lo, x_hi = model.x_bounds

    def ell_rot(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        x_next = np.asarray(model.f(x, u), dtype=float)
        base = np.asarray(model.ell(x, u), dtype=float)
        xc = np.clip(x_next, x_lo, x_hi)
        out = base - ell_star + storage(np.clip(x, x_lo, x_hi)) - storage(xc)
        out = np.where(np.isfinite(base), out, np.inf)
        return float(out) if out.ndim == 0 else out

    return ScalarModel(model.f, ell_rot, model.x_bounds, model.u_bounds,
                       name=model.name + "-rotated", input_for=model.input_for)


def enumerate_periodic_orbits(model: FiniteModel, p_max: int) -> list:
    """All simple cycles of the transition graph of length at most ``p_max``.

    Parallel transitions (same states, different inputs) yield distinct
    orbits.  The result is sorted by average cost, ties keeping discovery
    order.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(model.states)))
    pos = {s: i for i, s in enumerate(model.states)}
    edges: dict = {}
    for t in model.transitions:
        a, b = pos[t.state], pos[t.next_state]
        edges.setdefault((a, b), []).append(t)
        graph.add_edge(a, b)

    found = []
    for cycle in nx.simple_cycles(graph, length_bound=p_max):
        # canonical rotation: start at the smallest state index
        i0 = cycle.index(min(cycle))
        cycle = cycle[i0:] + cycle[:i0]
        hops = [edges[(cycle[k], cycle[(k + 1) % len(cycle)])] for k in range(len(cycle))]
        for choice in product(*hops):
            orbit = PeriodicOrbit([(t.state, t.input) for t in choice])
            avg = math.fsum(t.cost for t in choice) / len(choice)
            found.append((avg, tuple(cycle), orbit))
    found.sort(key=lambda item: (item[0], len(item[1]), item[1]))
    return [orbit for _, _, orbit in found]

