"""Built-in example systems.

Each constructor returns ``(model, optimal_orbit, ell_star)``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..core import FiniteModel, PeriodicOrbit, ScalarModel, Transition, orbit_average_cost
from ..linesearch import golden_section

# log argument must exceed this for the growth cost to be defined
LOG_MARGIN = 1e-12


def example1():
    """Three-state system ``x+ = u`` with a cheap 2-cycle and a costly self-loop."""
    transitions = [
        Transition(-1, -1, -1, 1.0),
        Transition(-1, 0, 0, 1.0),
        Transition(0, 1, 1, 0.0),
        Transition(1, 0, 0, 1.5),
    ]
    model = FiniteModel((-1, 0, 1), transitions, name="example1")
    orbit = PeriodicOrbit([(0, 1), (1, 0)])
    return model, orbit, orbit_average_cost(model, orbit)


def _flip_f(x, u):
    return u - x


def _cubic_cost(x, u):
    if type(x) is float and type(u) is float:
        return x * x * x
    return np.asarray(x, dtype=float) ** 3 + 0.0 * np.asarray(u, dtype=float)


def _flip_input(x, x_next):
    return x_next + x


def example3():
    """``x+ = -x + u``, ``ell = x**3`` on ``[-1, 1] x [-0.1, 0.1]``; optimal 2-cycle."""
    model = ScalarModel(_flip_f, _cubic_cost, (-1.0, 1.0), (-0.1, 0.1),
                        name="example3", input_for=_flip_input)
    orbit = PeriodicOrbit([(-1.0, -0.1), (0.9, -0.1)])
    return model, orbit, orbit_average_cost(model, orbit)


EXAMPLE3_X0 = 0.05


def _shift_f(x, u):
    if type(u) is float:
        return u
    return np.asarray(u, dtype=float) + 0.0 * np.asarray(x, dtype=float)


def _growth_cost(x, u):
    if type(x) is float and type(u) is float:
        if x < 0.0:
            return math.inf
        g = 5.0 * x ** 0.34 - u
        return -math.log(g) if g > LOG_MARGIN else math.inf
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(all="ignore"):
        g = 5.0 * np.power(np.maximum(x, 0.0), 0.34) - u
        out = -np.log(np.where(g > LOG_MARGIN, g, 1.0))
    return np.where((g > LOG_MARGIN) & (x >= 0.0), out, np.inf)


def _shift_input(x, x_next):
    return x_next + 0.0 * np.asarray(x, dtype=float) if not isinstance(x, float) else x_next


@lru_cache(maxsize=None)
def growth_steady_state(tol: float = 1e-14):
    """Minimiser of ``ell(x, x)`` on ``[0.1, 10]`` and its value."""
    x_s, _, _ = golden_section(lambda x: _growth_cost(x, x), 0.1, 10.0, tol=tol, max_iter=500)
    return x_s, _growth_cost(x_s, x_s)


def example4():
    """``x+ = u``, ``ell = -log(5 x**0.34 - u)`` on ``[0, 10] x [0.1, 10]``; optimal steady state."""
    model = ScalarModel(_shift_f, _growth_cost, (0.0, 10.0), (0.1, 10.0),
                        name="example4", input_for=_shift_input)
    x_s, ell_star = growth_steady_state()
    return model, PeriodicOrbit([(x_s, x_s)]), ell_star


EXAMPLE4_X0 = 0.1

BUILTIN = {"example1": example1, "example3": example3, "example4": example4}
DEFAULT_X0 = {"example1": -1, "example3": EXAMPLE3_X0, "example4": EXAMPLE4_X0}


def load(example_id: str):
    key = str(example_id)
    if not key.startswith("example"):
        key = "example" + key
    try:
        return BUILTIN[key]()
    except KeyError:
        raise ValueError(f"unknown example {example_id!r}") from None
