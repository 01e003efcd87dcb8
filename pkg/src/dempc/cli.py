"""Command-line interface: ``dempc <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys

from .analysis import find_storage_lp, gridded_storage_lp, turnpike_profile
from .core import FiniteModel
from .discount import builtin, parse as parse_discount, validate_discount
from .harness.experiment import (ExperimentConfig, parse_n_range, parse_scheme, run_anecdotes,
                                 run_sweep)
from .mpc import NoLimitDetected, asymptotic_average, simulate_until_periodic

# flag name -> config field
_SWEEP_FIELDS = {
    "example": "example",
    "discounts": "discounts",
    "n": "N_list",
    "x0": "x0",
    "scheme": "scheme",
    "grid_x": "state_nodes",
    "grid_u": "input_nodes",
    "tol": "refinement_tol",
    "t_max": "T_max",
    "out": "out_csv",
    "json": "out_json",
    "jobs": "jobs",
    "seed": "seed",
}


def _config(args, fields) -> ExperimentConfig:
    """Config file values overridden by any flag given on the command line."""
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    for flag, name in fields.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if name == "discounts":
            value = [d for d in value.split(",") if d]
        elif name == "N_list":
            value = parse_n_range(value)
        data[name] = value
    if getattr(args, "timing", False):
        data["timing_in_csv"] = True
    return ExperimentConfig.from_dict(data)


def _add_common(p):
    p.add_argument("--config", help="JSON file with config fields; flags override it")
    p.add_argument("--example", help="1, 3, 4 or a path to a JSON model")
    p.add_argument("--x0", type=float)
    p.add_argument("--grid-x", type=int, help="state grid nodes")
    p.add_argument("--grid-u", type=int, help="input grid nodes")
    p.add_argument("--tol", type=float, help="refinement tolerance (0 disables refinement)")


def cmd_sweep(args) -> int:
    cfg = _config(args, _SWEEP_FIELDS)
    result = run_sweep(cfg)
    if not cfg.out_csv:
        sys.stdout.write(result.to_csv(cfg.timing_in_csv))
    else:
        print(f"wrote {len(result.records)} rows to {cfg.out_csv}")
    return 0


def cmd_run(args) -> int:
    fields = dict(_SWEEP_FIELDS)
    fields.update({"discount": "discounts"})
    cfg = _config(args, fields)
    if len(cfg.discounts) != 1 or len(cfg.N_list) != 1:
        print("run needs exactly one --discount and one --n", file=sys.stderr)
        return 2
    model, orbit, ell_star, x0 = cfg.load()
    schedule = parse_discount(cfg.discounts[0])
    run = simulate_until_periodic(model, schedule, cfg.N_list[0], x0, cfg.make_scheme(orbit),
                                  cfg.grid, T=min(cfg.T, cfg.T_max), T_max=cfg.T_max)
    traj = run.trajectory
    print("t\tx\tu\tcost")
    for t, (x, u, c) in enumerate(zip(traj.states, traj.inputs, traj.costs)):
        print(f"{t}\t{x!r}\t{u!r}\t{c:.17g}")
    print(f"status: {run.status}")
    try:
        j = asymptotic_average(run)
    except NoLimitDetected as exc:
        print(f"J_inf_av: undetermined ({exc})")
        return 1
    print(f"limit: onset t0={run.limit.onset}, period {run.limit.period}")
    print(f"J_inf_av: {j:.17g}")
    print(f"gap to ell*: {j - ell_star:.17g}")
    return 0


def cmd_check_discount(args) -> int:
    params = {} if args.q is None else {"q": args.q}
    try:
        schedule = builtin(args.name, **params)
        report = validate_discount(schedule)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    return 0 if report.is_valid else 1


def cmd_dissipativity(args) -> int:
    cfg = _config(args, {"example": "example"})
    model, orbit, ell_star, _ = cfg.load()
    if isinstance(model, FiniteModel):
        storage, margin = find_storage_lp(model, orbit, ell_star)
        values = storage.values
    else:
        storage, margin, _ = gridded_storage_lp(model, orbit, ell_star, args.nodes, args.nodes)
        values = dict(zip(storage.nodes, storage.values))
    print(f"ell*: {ell_star:.17g}")
    print(f"margin: {margin:.17g}")
    for s, v in values.items():
        print(f"lambda({s!r}) = {v:.17g}")
    return 0


def cmd_turnpike(args) -> int:
    cfg = _config(args, {"example": "example", "x0": "x0", "grid_x": "state_nodes",
                         "grid_u": "input_nodes", "tol": "refinement_tol"})
    model, orbit, _, x0 = cfg.load()
    schedule = parse_discount(args.discount)
    report = turnpike_profile(model, schedule, x0, parse_n_range(args.n_list),
                              [float(e) for e in args.eps_list.split(",")], orbit, cfg.grid)
    text = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_anecdotes(args) -> int:
    report = run_anecdotes()
    print(report.summary())
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dempc", description="Discounted economic MPC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="J_inf_av gaps over discounts and horizons")
    _add_common(p)
    p.add_argument("--discounts", help="comma list, e.g. lin,half-lin,poly:2,un")
    p.add_argument("--n", help="horizons, e.g. 2..20 or 3,5,9")
    p.add_argument("--scheme", help="discounted | pstep[:P] | terminal:PHI")
    p.add_argument("--t-max", type=int)
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--json", help="JSON mirror output path")
    p.add_argument("--jobs", type=int, help="parallel workers (default: $DEMPC_JOBS or 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="one closed loop; prints the trajectory and J_inf_av")
    _add_common(p)
    p.add_argument("--discount")
    p.add_argument("--n")
    p.add_argument("--scheme", help="discounted | pstep[:P] | terminal:PHI")
    p.add_argument("--t-max", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-discount", help="validate a discount; exit 1 if inadmissible")
    p.add_argument("--name", required=True)
    p.add_argument("--q", type=int)
    p.set_defaults(func=cmd_check_discount)

    p = sub.add_parser("dissipativity", help="storage function by linear programming")
    p.add_argument("--config")
    p.add_argument("--example", default="1")
    p.add_argument("--nodes", type=int, default=21, help="grid nodes for scalar models")
    p.set_defaults(func=cmd_dissipativity)

    p = sub.add_parser("turnpike", help="turnpike counts over horizons and radii")
    _add_common(p)
    p.add_argument("--discount", required=True)
    p.add_argument("--n-list", required=True)
    p.add_argument("--eps-list", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_turnpike)

    p = sub.add_parser("anecdotes", help="baseline comparisons")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_anecdotes)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
