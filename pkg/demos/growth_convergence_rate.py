"""Gap decay of the linear discount on the growth model, with a log-log fit."""
import numpy as np

from dempc.harness.experiment import ExperimentConfig, run_sweep


def main():
    Ns = [5, 10, 20, 30]
    cfg = ExperimentConfig.from_dict({"example": "4", "discounts": ["lin"], "N_list": Ns})
    gaps = [r.gap for r in run_sweep(cfg).records]
    for N, g in zip(Ns, gaps):
        print(f"N={N:>2}: gap {g:.4e}")
    slope = np.polyfit(np.log(Ns), np.log(gaps), 1)[0]
    print(f"fitted exponent {slope:.2f}")


if __name__ == "__main__":
    main()
