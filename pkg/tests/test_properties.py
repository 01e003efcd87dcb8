"""Property suites over random instances."""
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from dempc.analysis import turnpike_count
from dempc.core import FiniteModel, StorageFunction, rollout, rotated_cost
from dempc.harness.experiment import records_from_csv, records_to_csv
from dempc.harness.models import example3, example4
from dempc.mpc import PerformanceRecord
from dempc.ocp import GridSolver, GridSpec, refine, solve_finite

from test_ocp import enumerate_finite

FAST = settings(max_examples=100, deadline=None, derandomize=True,
                suppress_health_check=[HealthCheck.too_slow])

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=8)


@st.composite
def finite_instances(draw):
    """Random finite model where every state has an outgoing transition."""
    n = draw(st.integers(1, 4))
    rows = []
    for s in range(n):
        for i in range(draw(st.integers(1, 3))):
            rows.append((s, f"u{i}", draw(st.integers(0, n - 1)), draw(fractions)))
    model = FiniteModel(tuple(range(n)), rows)
    N = draw(st.integers(1, 4))
    w = [draw(st.fractions(min_value=0, max_value=1, max_denominator=6)) for _ in range(N)]
    x0 = draw(st.integers(0, n - 1))
    return model, w, x0


@FAST
@given(finite_instances())
def test_dp_equals_enumeration_exactly(instance):
    model, w, x0 = instance
    sol = solve_finite(model, w, x0)
    best = enumerate_finite(model, w, x0)
    assert sol.value == best[0]
    assert sum((wk * c for wk, c in zip(w, sol.trajectory.costs)), Fraction(0)) == sol.value


@FAST
@given(finite_instances())
def test_bellman_tail_consistency(instance):
    model, w, x0 = instance
    if len(w) < 2:
        return
    sol = solve_finite(model, w, x0)
    tail = solve_finite(model, w[1:], sol.states[1])
    tail_cost = sum((wk * c for wk, c in zip(w[1:], sol.trajectory.costs[1:])), Fraction(0))
    assert tail.value == tail_cost


@FAST
@given(finite_instances(), st.fractions(min_value=Fraction(1, 10), max_value=10, max_denominator=10))
def test_weight_scaling_equivariance(instance, scale):
    model, w, x0 = instance
    sol = solve_finite(model, w, x0)
    scaled = solve_finite(model, [scale * v for v in w], x0)
    assert scaled.value == scale * sol.value
    assert scaled.inputs == sol.inputs


@FAST
@given(st.lists(st.floats(-0.1, 0.1), min_size=1, max_size=10),
       st.lists(st.floats(-5, 5), min_size=5, max_size=5))
def test_rotated_cost_telescopes(inputs, node_values):
    model, _, ell_star = example3()
    storage = StorageFunction(node_values, nodes=np.linspace(-1, 1, 5))
    traj = rollout(model, 0.0, inputs)
    rotated = sum(rotated_cost(model, storage, ell_star, x, u)
                  for x, u in zip(traj.states, traj.inputs))
    expected = (sum(traj.costs) - len(inputs) * ell_star
                + storage(traj.states[0]) - storage(traj.states[-1]))
    assert abs(rotated - expected) <= 1e-9


_Q_CACHE = {}


def _example3_solution(N, x0):
    key = (N, x0)
    if key not in _Q_CACHE:
        model, orbit, _ = example3()
        w = np.linspace(1, 1 / N, N)
        _Q_CACHE[key] = GridSolver(model, w, GridSpec(201, 41, refinement_tol=0)).grid_solution(x0)
    return _Q_CACHE[key]


@FAST
@given(st.integers(1, 12), st.sampled_from([-1.0, -0.5, 0.05, 0.5, 1.0]),
       st.floats(1e-6, 3.0), st.floats(1e-6, 3.0))
def test_turnpike_count_monotone_in_radius(N, x0, e1, e2):
    _, orbit, _ = example3()
    sol = _example3_solution(N, x0)
    lo, hi = sorted((e1, e2))
    q_lo, q_hi = turnpike_count(sol, orbit, lo), turnpike_count(sol, orbit, hi)
    assert 0 <= q_lo <= q_hi <= N


@settings(max_examples=30, deadline=None, derandomize=True)
@given(st.integers(1, 6), st.floats(0.1, 10.0), st.integers(21, 60))
def test_refine_never_increases_cost(N, x0, nodes):
    model, _, _ = example4()
    w = np.linspace(1.0, 1.0 / N, N)
    warm = GridSolver(model, w, GridSpec(nodes, nodes, refinement_tol=0)).grid_solution(x0)
    better = refine(model, w, warm, 1e-12, max_iters=50)
    assert better.value <= warm.value
    assert better.trajectory.check(model)


records = st.builds(
    PerformanceRecord,
    N=st.integers(1, 60),
    discount=st.sampled_from(["lin", "half-lin", "poly:2", "un"]),
    j_inf_av=st.floats(-10, 10, allow_nan=False),
    gap=st.floats(0, 1, allow_nan=False),
    onset=st.one_of(st.none(), st.integers(0, 500)),
    period=st.one_of(st.none(), st.integers(1, 10)),
    status=st.sampled_from(["ok", "infeasible at t=3"]),
    wall_ms=st.floats(0, 1e5, allow_nan=False),
)


@FAST
@given(st.lists(records, max_size=6), st.booleans())
def test_csv_deterministic_round_trip(recs, timing):
    text = records_to_csv(recs, timing)
    assert records_to_csv(recs, timing) == text
    back = records_from_csv(text)
    assert records_to_csv(back, timing) == text
    for a, b in zip(recs, back):
        assert (a.N, a.discount, a.j_inf_av, a.onset, a.period, a.status) == \
               (b.N, b.discount, b.j_inf_av, b.onset, b.period, b.status)
        assert b.gap == max(a.gap, 1e-13)
        assert b.wall_ms == (a.wall_ms if timing else None)
