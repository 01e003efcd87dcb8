"""Sweeps over (discount, N) and the baseline comparisons, with CSV/JSON export."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..discount import parse as parse_discount
from ..mpc import (RECURRENCE_TOL, PerformanceRecord, Scheme, performance, simulate,
                   simulate_until_periodic, transient_cost)
from ..ocp import GridSpec
from . import models
from .custom import load_model

CSV_COLUMNS = ("discount", "N", "gap", "J_inf_av", "t0", "p_cl", "wall_ms", "status")
GAP_FLOOR = 1e-13
# steps of sustained recurrence after which a sweep run stops early
SWEEP_STOP_AFTER = 12


@dataclass
class ExperimentConfig:
    example: str = "example3"
    discounts: list = field(default_factory=lambda: ["un", "lin", "poly:2", "half-lin"])
    N_list: list = field(default_factory=lambda: list(range(2, 21)))
    x0: Optional[float] = None
    scheme: str = "discounted"
    state_nodes: int = 2001
    input_nodes: int = 401
    refinement_tol: float = 1e-13
    max_refine_iters: int = 500
    T: int = 200
    T_max: int = 1600
    stop_after: Optional[int] = SWEEP_STOP_AFTER
    out_csv: Optional[str] = None
    out_json: Optional[str] = None
    timing_in_csv: bool = False
    seed: int = 0
    jobs: Optional[int] = None

    def __post_init__(self):
        self.example = _example_key(self.example)
        self.N_list = [int(n) for n in self.N_list]
        self.discounts = [str(d) for d in self.discounts]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.state_nodes, self.input_nodes, self.refinement_tol, self.max_refine_iters)

    def load(self):
        """``(model, orbit, ell_star, x0)`` for the configured example."""
        if self.example in models.BUILTIN:
            model, orbit, ell_star = models.BUILTIN[self.example]()
            x0 = models.DEFAULT_X0[self.example]
        else:
            model, orbit, ell_star, x0 = load_model(self.example)
        if self.x0 is not None:
            x0 = self.x0
        return model, orbit, ell_star, x0

    def make_scheme(self, orbit) -> Scheme:
        return parse_scheme(self.scheme, orbit)

    def validate(self) -> None:
        if not self.N_list:
            raise ValueError("N range is empty")
        if any(n < 1 for n in self.N_list):
            raise ValueError("every horizon N must be >= 1")
        for d in self.discounts:
            parse_discount(d)
        model, orbit, _, x0 = self.load()
        if hasattr(model, "in_x"):
            if not model.in_x(float(x0)):
                raise ValueError(f"x0={x0!r} outside the state box {model.x_bounds}")
        elif x0 not in model.states:
            raise ValueError(f"x0={x0!r} is not a state of the model")
        self.make_scheme(orbit)
        self.grid
        if self.T < 1 or self.T_max < self.T:
            raise ValueError("need 1 <= T <= T_max")
        if self.jobs is not None and self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _example_key(example) -> str:
    key = str(example)
    if key in models.BUILTIN:
        return key
    if "example" + key in models.BUILTIN:
        return "example" + key
    return key


def parse_scheme(text: str, orbit=None) -> Scheme:
    """``discounted``, ``pstep`` (period of the orbit), ``pstep:P`` or ``terminal:PHI``."""
    kind, _, arg = text.partition(":")
    if kind == "discounted":
        return Scheme()
    if kind == "pstep":
        p = int(arg) if arg else (orbit.period if orbit is not None else 1)
        return Scheme("pstep", p=p)
    if kind == "terminal":
        if orbit is None:
            raise ValueError("terminal scheme needs an orbit")
        return Scheme("terminal", phase_end=int(arg or 0), orbit=orbit)
    raise ValueError(f"unknown scheme {text!r}")


def parse_n_range(text: str) -> list:
    """``"2..20"`` (inclusive), ``"3,5,9"`` or a mix such as ``"1..3,10"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def default_jobs() -> int:
    value = os.environ.get("DEMPC_JOBS")
    return max(1, int(value)) if value else 1


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    records: list
    metadata: dict = field(default_factory=dict)

    def to_csv(self, timing: bool = False) -> str:
        return records_to_csv(self.records, timing)

    def to_json(self) -> str:
        rows = [_record_dict(r) for r in self.records]
        return json.dumps({"metadata": self.metadata, "records": rows}, indent=2, sort_keys=True)


def _record_dict(r: PerformanceRecord) -> dict:
    d = asdict(r)
    d["transient"] = {str(k): v for k, v in r.transient.items()}
    for key in ("gap", "j_inf_av"):
        if isinstance(d[key], float) and math.isnan(d[key]):
            d[key] = None
    return d


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def records_to_csv(records, timing: bool = False) -> str:
    """CSV at 17 significant digits; gaps are floored at ``GAP_FLOOR``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        gap = r.gap if math.isnan(r.gap) else max(r.gap, GAP_FLOOR)
        w.writerow([r.discount, r.N, _fmt(gap), _fmt(r.j_inf_av), _fmt(r.onset), _fmt(r.period),
                    _fmt(r.wall_ms) if timing else "", r.status])
    return buf.getvalue()


def _opt(text, conv):
    return None if text == "" else conv(text)


def records_from_csv(text: str) -> list:
    """Inverse of :func:`records_to_csv` (the gap column holds the floored value)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    return [PerformanceRecord(N=int(r["N"]), discount=r["discount"], j_inf_av=float(r["J_inf_av"]),
                              gap=float(r["gap"]), onset=_opt(r["t0"], int),
                              period=_opt(r["p_cl"], int), status=r["status"],
                              wall_ms=_opt(r["wall_ms"], float))
            for r in rows]


def _run_cell(config: ExperimentConfig, discount: str, N: int) -> PerformanceRecord:
    model, orbit, ell_star, x0 = config.load()
    schedule = parse_discount(discount)
    start = time.perf_counter()
    try:
        run = simulate_until_periodic(model, schedule, N, x0, config.make_scheme(orbit), config.grid,
                                      T=config.T, T_max=config.T_max, tol=RECURRENCE_TOL,
                                      stop_after=config.stop_after)
        rec = performance(run, ell_star)
    except Exception as exc:  # recorded in-row, never aborts the sweep
        rec = PerformanceRecord(N, schedule.label, math.nan, math.nan, status=f"error: {exc}")
    rec.discount = discount
    rec.wall_ms = (time.perf_counter() - start) * 1e3
    return rec


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """One record per (discount, N), in that order; writes any configured outputs."""
    config.validate()
    cells = [(d, N) for d in config.discounts for N in config.N_list]
    jobs = config.jobs or default_jobs()
    start = time.perf_counter()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, config, d, N) for d, N in cells]
            records = [f.result() for f in futures]
    else:
        records = [_run_cell(config, d, N) for d, N in cells]
    _, _, ell_star, x0 = config.load()
    metadata = {
        "config": config.to_dict(),
        "ell_star": ell_star,
        "x0": x0,
        "recurrence_tol": RECURRENCE_TOL,
        "wall_s": time.perf_counter() - start,
        "wall_ms": {f"{r.discount}/{r.N}": r.wall_ms for r in records},
    }
    result = SweepResult(records, metadata)
    if config.out_csv:
        Path(config.out_csv).write_text(result.to_csv(config.timing_in_csv))
    if config.out_json:
        Path(config.out_json).write_text(result.to_json())
    return result


# --------------------------------------------------------------------------
# baseline comparisons


@dataclass
class AnecdoteReport:
    staircase_steps_at_start: int
    staircase_T: int
    linear_reaches_orbit_at: Optional[int]
    terminal_status: dict
    terminal_threshold: Optional[int]
    terminal_costs: dict
    terminal_matched_gap: float
    discounted_costs: dict
    pstep_gaps: dict

    def summary(self) -> str:
        lines = ["Example 1 (finite system, x0 = -1)"]
        if self.staircase_steps_at_start == self.staircase_T:
            lines.append(f"  staircase, N=6: stayed at -1 for {self.staircase_T} steps")
        else:
            lines.append(f"  staircase, N=6: left -1 after {self.staircase_steps_at_start} steps")
        lines.append(f"  linear, N=2: reaches the optimal orbit at t={self.linear_reaches_orbit_at}")
        lines.append("Example 3, terminal equality baseline, x0 = -1, mismatched phase")
        for N, status in self.terminal_status.items():
            lines.append(f"  N={N}: {status}")
        lines.append(f"  smallest feasible N: {self.terminal_threshold}")
        for key, val in self.terminal_costs.items():
            lines.append(f"  N=20 {key} = {val:.6f}")
        lines.append(f"  matched phase, N=20: gap = {self.terminal_matched_gap:.3g}")
        lines.append("Example 3, half-linear discount, N=7, x0 = -1")
        for key, val in self.discounted_costs.items():
            lines.append(f"  {key} = {val:.6f}")
        lines.append(f"Example 3, p*-step baseline (p*=2, undiscounted), x0 = {models.EXAMPLE3_X0}")
        for N, gap in self.pstep_gaps.items():
            lines.append(f"  N={N}: gap = {gap:.3g}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("terminal_status", "pstep_gaps"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d


def run_anecdotes(grid: Optional[GridSpec] = None, terminal_N=range(1, 21),
                  pstep_N=range(3, 13)) -> AnecdoteReport:
    """Staircase failure, terminal-constraint and p*-step baselines."""
    undiscounted = parse_discount("un")

    m1, orbit1, _ = models.example1()
    stair = simulate(m1, parse_discount("staircase"), 6, -1, 50)
    states = stair.trajectory.states
    waited = next((t for t, x in enumerate(states[:50]) if x != -1), 50)
    lin = simulate(m1, parse_discount("lin"), 2, -1, 20)
    on = [t for t, x in enumerate(lin.trajectory.states) if x in orbit1.states]
    reach = on[0] if on and all(x in orbit1.states for x in lin.trajectory.states[on[0]:]) else None

    m3, orbit3, ell3 = models.example3()
    x_start = orbit3.states[0]
    # phase 0 start: the endpoint phase mismatches when phase_end != N mod 2
    status, threshold = {}, None
    for N in terminal_N:
        scheme = Scheme("terminal", phase_end=(N + 1) % 2, orbit=orbit3)
        run = simulate(m3, undiscounted, N, x_start, 1, scheme, grid)
        status[N] = "feasible" if run.feasible else run.status
        if run.feasible and threshold is None:
            threshold = N
    tc = simulate(m3, undiscounted, 20, x_start, 40, Scheme("terminal", phase_end=1, orbit=orbit3), grid)
    terminal_costs = {"J_20": transient_cost(tc, 20), "J_21": transient_cost(tc, 21)}
    matched = simulate(m3, undiscounted, 20, x_start, 24, Scheme("terminal", phase_end=0, orbit=orbit3), grid)
    matched_gap = performance(matched, ell3).gap

    hl = simulate(m3, parse_discount("half-lin"), 7, x_start, 40, grid=grid)
    discounted_costs = {"J_20": transient_cost(hl, 20), "J_21": transient_cost(hl, 21)}

    pstep = {}
    for N in pstep_N:
        run = simulate(m3, undiscounted, N, models.EXAMPLE3_X0, 60, Scheme("pstep", p=orbit3.period), grid)
        pstep[N] = performance(run, ell3).gap

    return AnecdoteReport(waited, 50, reach, status, threshold, terminal_costs, matched_gap,
                          discounted_costs, pstep)
