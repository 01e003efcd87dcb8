"""Scalar minimisation on an interval."""
from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimise ``fun`` on ``[lo, hi]`` by golden-section search.

    The endpoints are compared with the interior estimate, so optima on the
    boundary are returned exactly.

    Returns
    -------
    (x, f(x), evaluations)
    """
    if hi < lo:
        raise ValueError("empty interval")
    f_lo, f_hi = fun(lo), fun(hi)
    n_eval = 2
    if hi - lo <= tol:
        return (lo, f_lo, n_eval) if f_lo <= f_hi else (hi, f_hi, n_eval)

    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    n_eval += 2
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = fun(d)
        n_eval += 1

    x, fx = (c, fc) if fc <= fd else (d, fd)
    if f_lo <= fx and f_lo <= f_hi:
        return lo, f_lo, n_eval
    if f_hi < fx:
        return hi, f_hi, n_eval
    return x, fx, n_eval
