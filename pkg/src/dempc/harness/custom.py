"""User-defined models loaded from JSON.

Finite model::

    {"kind": "finite",
     "transitions": [[x, u, x_next, cost], ...],
     "states": [...],                  # optional, inferred from transitions
     "orbit": [[x, u], ...],           # optional, best cycle found otherwise
     "x0": ...}

Scalar model::

    {"kind": "scalar",
     "f": "-x + u", "ell": "pow(x, 3)",
     "x_bounds": [-1, 1], "u_bounds": [-0.1, 0.1],
     "input_for": "x_next + x",        # optional inverse of f in u
     "orbit": [[-1, -0.1], [0.9, -0.1]],
     "x0": 0.05}

Expressions use ``x`` and ``u`` (``x`` and ``x_next`` for ``input_for``),
numeric literals, ``+ - * / **``, and the functions ``log``, ``pow``,
``min``, ``max``, ``abs``.  Undefined values (e.g. ``log`` of a non-positive
number) evaluate to ``+inf`` so the pair is treated as infeasible.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from pathlib import Path

import numpy as np

from ..core import (FiniteModel, PeriodicOrbit, ScalarModel, Transition,
                    enumerate_periodic_orbits, orbit_average_cost)

FUNCTIONS = {
    "log": np.log,
    "pow": np.power,
    "min": np.minimum,
    "max": np.maximum,
    "abs": np.abs,
}

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    pass


class Expression:
    """Arithmetic expression over a fixed set of variable names.

    The source is parsed once and checked against a whitelist of node types;
    evaluation walks the tree with numpy semantics, so arrays broadcast.
    """

    def __init__(self, source: str, variables=("x", "u")):
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINARY:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                name = getattr(node.func, "id", "?")
                raise ExpressionError(f"function {name!r} not allowed; use {sorted(FUNCTIONS)}")
            if node.keywords:
                raise ExpressionError("keyword arguments are not allowed")
            expected = 1 if node.func.id in ("log", "abs") else 2
            if len(node.args) != expected:
                raise ExpressionError(f"{node.func.id} takes {expected} argument(s)")
            for arg in node.args:
                self._check(arg)
        elif isinstance(node, ast.Name):
            if node.id not in self.variables:
                raise ExpressionError(f"unknown name {node.id!r}; expected one of {self.variables}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError(f"literal {node.value!r} is not a number")
        else:
            raise ExpressionError(f"{type(node).__name__} is not allowed in expressions")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINARY[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](*(self._eval(a, env) for a in node.args))
        if isinstance(node, ast.Name):
            return env[node.id]
        return float(node.value)

    def __call__(self, *args):
        env = {name: np.asarray(v, dtype=float) for name, v in zip(self.variables, args)}
        with np.errstate(all="ignore"):
            out = np.asarray(self._eval(self._tree, env), dtype=float)
            shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()), out.shape)
            out = np.broadcast_to(out, shape)
        out = np.where(np.isnan(out), np.inf, out)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"Expression({self.source!r})"


def _label(v):
    # JSON lists become tuples so labels stay hashable
    return tuple(v) if isinstance(v, list) else v


def model_from_dict(spec: dict):
    """Build ``(model, orbit, ell_star, x0)`` from a parsed JSON document."""
    kind = spec.get("kind")
    name = spec.get("name", "custom")
    if kind == "finite":
        rows = spec.get("transitions")
        if not rows:
            raise ValueError("finite model needs a nonempty 'transitions' list")
        transitions = [Transition(_label(a), _label(b), _label(c), float(d)) for a, b, c, d in rows]
        if "states" in spec:
            states = [_label(s) for s in spec["states"]]
        else:
            states = list(dict.fromkeys(s for t in transitions for s in (t.state, t.next_state)))
        model = FiniteModel(states, transitions, name=name)
        if "orbit" in spec:
            orbit = PeriodicOrbit([(_label(x), _label(u)) for x, u in spec["orbit"]])
        else:
            found = enumerate_periodic_orbits(model, int(spec.get("p_max", len(states))))
            if not found:
                raise ValueError("finite model has no cycle")
            orbit = found[0]
        x0 = _label(spec.get("x0", states[0]))
    elif kind == "scalar":
        for key in ("f", "ell", "x_bounds", "u_bounds", "orbit"):
            if key not in spec:
                raise ValueError(f"scalar model needs {key!r}")
        f = Expression(spec["f"])
        ell = Expression(spec["ell"])
        inv = Expression(spec["input_for"], ("x", "x_next")) if "input_for" in spec else None
        model = ScalarModel(f, ell, tuple(map(float, spec["x_bounds"])),
                            tuple(map(float, spec["u_bounds"])), name=name, input_for=inv)
        orbit = PeriodicOrbit([(float(x), float(u)) for x, u in spec["orbit"]])
        x0 = float(spec.get("x0", orbit.states[0]))
    else:
        raise ValueError(f"model kind must be 'finite' or 'scalar', got {kind!r}")
    if not orbit.is_closed(model):
        raise ValueError("orbit is not closed under the model dynamics")
    ell_star = orbit_average_cost(model, orbit)
    if not math.isfinite(ell_star):
        raise ValueError("orbit has undefined stage cost")
    return model, orbit, ell_star, x0


def load_model(path) -> tuple:
    """Read a JSON model file; see the module docstring for the format."""
    with open(Path(path)) as fh:
        return model_from_dict(json.load(fh))
