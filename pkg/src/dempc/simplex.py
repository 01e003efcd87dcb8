"""Dense two-phase simplex for small linear programs.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
per-variable bounds.  Bland's rule is used for both entering and leaving
variables, so the method cannot cycle.  Intended for problems with at most a
few hundred rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

PIVOT_TOL = 1e-11


@dataclass
class LpResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: Optional[np.ndarray]
    fun: float
    iterations: int

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Tableau ``[A | b]`` with a basis, pivoted in place."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list):
        self.T = np.hstack([A, b[:, None]]).astype(float)
        self.basis = list(basis)
        self.iterations = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def optimise(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        """Minimise ``cost @ x`` over the current basis using Bland's rule."""
        m = len(self.basis)
        for _ in range(max_iter):
            T = self.T
            cb = cost[self.basis]
            reduced = cost - cb @ T[:, :-1]
            candidates = np.flatnonzero(allowed & (reduced < -PIVOT_TOL))
            if candidates.size == 0:
                return "optimal"
            j = int(candidates[0])
            col = T[:, j]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
            r = min(ties, key=lambda i: self.basis[i])
            self.pivot(int(r), j)
        raise RuntimeError(f"simplex did not terminate in {max_iter} iterations (m={m})")


def _standard_form(c, A_ub, b_ub, A_eq, b_eq, bounds):
    """Rewrite as ``min c' y, A y = b, y >= 0`` and return the back-substitution."""
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    bounds = [(0.0, None)] * n if bounds is None else list(bounds)
    if len(bounds) != n:
        raise ValueError("bounds must have one entry per variable")

    # x_j = offset_j + sum_i M[j, i] y_i
    cols, offset = [], np.zeros(n)
    extra_rows, extra_rhs = [], []
    for j, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            raise ValueError(f"variable {j} has empty bounds [{lo}, {hi}]")
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((n, len(cols)))
    for i, (j, s) in enumerate(cols):
        M[j, i] = s

    ny = len(cols)
    Aub_y = A_ub @ M
    bub_y = b_ub - A_ub @ offset
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        for r, (i, _) in enumerate(extra_rows):
            E[r, i] = 1.0
        Aub_y = np.vstack([Aub_y, E])
        bub_y = np.concatenate([bub_y, [v for _, v in extra_rows]])
    Aeq_y = A_eq @ M
    beq_y = b_eq - A_eq @ offset

    n_slack = len(bub_y)
    A = np.vstack([
        np.hstack([Aub_y, np.eye(n_slack)]),
        np.hstack([Aeq_y, np.zeros((len(beq_y), n_slack))]),
    ])
    b = np.concatenate([bub_y, beq_y])
    cost = np.concatenate([np.asarray(c, dtype=float) @ M, np.zeros(n_slack)])
    return A, b, cost, M, offset, float(np.asarray(c, dtype=float) @ offset)


def linprog(c: Sequence[float], A_ub=None, b_ub=None, A_eq=None, b_eq=None,
            bounds=None, max_iter: int = 10000) -> LpResult:
    """Minimise ``c @ x`` by the two-phase dense simplex method.

    ``bounds`` is a list of ``(lo, hi)`` pairs (``None`` for unbounded); the
    default is ``x >= 0``.
    """
    A, b, cost, M, offset, const = _standard_form(c, A_ub, b_ub, A_eq, b_eq, bounds)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificial variables on every row
    A1 = np.hstack([A, np.eye(m)])
    tab = _Tableau(A1, b, list(range(n, n + m)))
    phase1_cost = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    tab.optimise(phase1_cost, allowed, max_iter)
    infeas = float(tab.T[:, -1] @ phase1_cost[tab.basis])
    if infeas > 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LpResult("infeasible", None, np.nan, tab.iterations)

    # drive remaining artificials out of the basis (or drop redundant rows)
    keep = []
    for r in range(m):
        if tab.basis[r] < n:
            keep.append(r)
            continue
        row = tab.T[r, :n]
        nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        if nz.size:
            tab.pivot(r, int(nz[0]))
            keep.append(r)
    tab.T = np.hstack([tab.T[keep][:, :n], tab.T[keep][:, -1:]])
    tab.basis = [tab.basis[r] for r in keep]

    status = tab.optimise(cost, np.ones(n, dtype=bool), max_iter)
    if status == "unbounded":
        return LpResult("unbounded", None, -np.inf, tab.iterations)
    y = np.zeros(n)
    y[tab.basis] = tab.T[:, -1]
    x = offset + M @ y[:M.shape[1]]
    return LpResult("optimal", x, float(cost @ y) + const, tab.iterations)
