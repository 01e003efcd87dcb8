import math

import pytest

from dempc.core import PeriodicOrbit, Trajectory
from dempc.discount import builtin
from dempc.harness.models import EXAMPLE3_X0, example1, example3
from dempc.mpc import (ClosedLoopRun, Controller, NoLimitDetected, RunTooShort, Scheme,
                       asymptotic_average, detect_period, max_orbit_distance, mpc_step,
                       performance, simulate, transient_cost)


def _run(states, inputs, costs=None):
    costs = costs if costs is not None else [0.0] * len(inputs)
    return ClosedLoopRun(Trajectory(states, inputs, costs), Scheme(), builtin("lin"), 1)


def test_mpc_step_example1():
    model, _, _ = example1()
    assert mpc_step(model, builtin("lin"), 2, -1)[0] == 0
    assert mpc_step(model, builtin("staircase"), 6, -1)[0] == -1


def test_mpc_step_example3_single_stage_tie():
    model, _, _ = example3()
    for name in ("lin", "half-lin", "un"):
        assert mpc_step(model, builtin(name), 1, -1.0)[0] == -0.1


def test_staircase_waits_forever():
    model, _, _ = example1()
    run = simulate(model, builtin("staircase"), 6, -1, 50)
    assert set(run.trajectory.states) == {-1}
    assert run.limit.period == 1


def test_undiscounted_odd_horizon_stuck_at_steady_state():
    model, _, _ = example3()
    run = simulate(model, builtin("un"), 9, EXAMPLE3_X0, 100)
    assert run.limit.period == 1
    x, u = run.limit.orbit.points[0]
    assert x == pytest.approx(0.05) and u == pytest.approx(0.1)


def test_undiscounted_even_horizon_stuck_in_small_cycle():
    model, _, _ = example3()
    run = simulate(model, builtin("un"), 10, EXAMPLE3_X0, 100)
    assert run.limit.period == 2
    pts = sorted(run.limit.orbit.points)
    assert pts[0] == pytest.approx((-0.15, -0.1))
    assert pts[1] == pytest.approx((0.05, -0.1))


def test_receding_horizon_consistency():
    model, _, _ = example3()
    run = simulate(model, builtin("half-lin"), 5, EXAMPLE3_X0, 12)
    for t, plan in run.plans:
        assert run.trajectory.inputs[t] == plan[0]
    run = simulate(model, builtin("un"), 6, EXAMPLE3_X0, 12, Scheme("pstep", p=2))
    plans = dict(run.plans)
    assert sorted(plans) == list(range(0, 12, 2))
    for t, u in enumerate(run.trajectory.inputs):
        assert u == plans[t - t % 2][t % 2]


def test_detect_period_examples():
    lim = detect_period(_run([-1] * 21, [-1] * 20), 1e-8, 10)
    assert (lim.onset, lim.period) == (0, 1)
    assert lim.orbit == PeriodicOrbit([(-1, -1)])
    alt = detect_period(_run([0, 1] * 10 + [0], [1, 0] * 10), 1e-8, 10)
    assert (alt.onset, alt.period) == (0, 2)
    assert detect_period(_run(list(range(21)), list(range(20))), 1e-8, 5) is None


def test_detect_period_onset():
    states = [5, 4, 3] + [0, 1] * 9
    inputs = [9, 9, 9] + [1, 0] * 8 + [1]
    lim = detect_period(_run(states, inputs), 1e-8, 10)
    assert (lim.onset, lim.period) == (3, 2)


def test_detected_limit_is_closed_orbit():
    model, orbit, _ = example3()
    run = simulate(model, builtin("half-lin"), 7, EXAMPLE3_X0, 40)
    assert run.limit.period == 2
    assert run.limit.orbit.closure_error(model) <= 1e-7
    for got, want in zip(sorted(run.limit.orbit.points), sorted(orbit.points)):
        assert got == pytest.approx(want, abs=1e-7)


def test_asymptotic_average_and_errors():
    run = _run([-1] * 11, [-1] * 10, [2.5] * 10)
    run.limit = detect_period(run)
    assert asymptotic_average(run) == 2.5
    empty = _run(list(range(6)), list(range(5)))
    with pytest.raises(NoLimitDetected):
        asymptotic_average(empty)
    assert transient_cost(empty, 0) == 0
    with pytest.raises(RunTooShort):
        transient_cost(empty, 6)


def test_example3_gaps():
    model, _, ell_star = example3()
    run = simulate(model, builtin("half-lin"), 7, EXAMPLE3_X0, 60)
    assert performance(run, ell_star).gap <= 1e-8
    run = simulate(model, builtin("un"), 5, EXAMPLE3_X0, 60)
    assert performance(run, ell_star).gap == pytest.approx(0.135625, abs=1e-3)


def test_transient_costs_half_linear_from_orbit_start():
    model, _, _ = example3()
    run = simulate(model, builtin("half-lin"), 7, -1.0, 30)
    assert transient_cost(run, 20) == pytest.approx(-2.71, abs=0.01)
    assert transient_cost(run, 21) == pytest.approx(-3.71, abs=0.01)


def test_terminal_scheme_feasibility_and_costs():
    model, orbit, _ = example3()
    bad = simulate(model, builtin("un"), 19, -1.0, 5, Scheme("terminal", phase_end=0, orbit=orbit))
    assert bad.status == "infeasible at t=0" and not bad.feasible
    run = simulate(model, builtin("un"), 20, -1.0, 24, Scheme("terminal", phase_end=1, orbit=orbit))
    assert run.feasible
    assert transient_cost(run, 20) == pytest.approx(-1.0, abs=1e-6)
    assert transient_cost(run, 21) == pytest.approx(-0.271, abs=1e-3)
    matched = simulate(model, builtin("un"), 4, -1.0, 10, Scheme("terminal", phase_end=0, orbit=orbit))
    assert max_orbit_distance(matched, orbit) == 0.0


def test_scheme_validation():
    with pytest.raises(ValueError):
        Scheme("mystery")
    with pytest.raises(ValueError):
        Scheme("terminal")
    with pytest.raises(ValueError):
        Scheme("pstep", p=0)
    with pytest.raises(ValueError):
        simulate(example1()[0], builtin("lin"), 2, -1, 0)


def test_controller_memoises():
    model, _, _ = example3()
    ctrl = Controller(model, builtin("lin"), 4)
    a = ctrl.solve(0.05)
    assert ctrl.solve(0.05) is a


def test_performance_record_gap_definition():
    model, _, ell_star = example1()
    run = simulate(model, builtin("lin"), 3, -1, 20)
    rec = performance(run, ell_star, transient_T=(5,))
    assert rec.gap == rec.j_inf_av - ell_star
    assert rec.gap == 0.0
    assert rec.transient[5] == math.fsum(run.trajectory.costs[:5])
