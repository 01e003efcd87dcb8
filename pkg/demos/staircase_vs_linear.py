"""Three-state system: a linear discount reaches the optimal 2-cycle at once,
the staircase discount keeps postponing the switch."""
from dempc.discount import builtin
from dempc.harness.models import example1
from dempc.mpc import simulate


def main():
    model, orbit, ell_star = example1()
    print(f"optimal orbit {orbit.points}, average cost {ell_star}")
    for name in ("lin", "staircase"):
        for N in (4, 6, 8):
            run = simulate(model, builtin(name), N, -1, 20)
            print(f"{name:>9} N={N}: states {list(run.trajectory.states[:8])} ...")


if __name__ == "__main__":
    main()
