"""Closed-loop gaps on the sign-flipping scalar system for each discount."""
import argparse

from dempc.harness.experiment import ExperimentConfig, run_sweep


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-max", type=int, default=12)
    args = parser.parse_args(argv)
    cfg = ExperimentConfig.from_dict({"example": "3", "N_list": list(range(2, args.n_max + 1))})
    result = run_sweep(cfg)
    names = cfg.discounts
    table = {(r.discount, r.N): r.gap for r in result.records}
    print("N   " + "".join(f"{n:>12}" for n in names))
    for N in cfg.N_list:
        print(f"{N:<4}" + "".join(f"{max(table[(n, N)], 0.0):12.3g}" for n in names))


if __name__ == "__main__":
    main()
