"""Propagation check on the 3-state example across several horizons.

    python3 scripts/propagation_sweep.py [--M 20000] [--workers 1] [--seed 0]

Prints one line per horizon T with the number of test functions within
|z| <= 4 and the chi-square p-value of the x = 0 marginal.
"""

import argparse

from stickyshock import StateGrid, quadratic, single_step
from stickyshock.experiments import verify_propagation
from stickyshock.kinetic import SolverScheme


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=20_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--L", type=float, default=5.0)
    args = ap.parse_args()
    g = single_step(StateGrid([0.0, 1.0, 2.0]), 1.0, 1.0)
    H = quadratic(2.0)
    for T in (0.25, 0.5, 1.0, 2.0):
        rep = verify_propagation(
            g, H, 1.0, args.L, T, args.M, seed=args.seed, workers=args.workers, scheme=SolverScheme("rk4", 1e-3)
        )
        zs = [s.score for s in rep.statistics if s.score_kind == "z"]
        p = next(s.score for s in rep.statistics if s.name == "x0_marginal_chi_square")
        n_ok = sum(abs(z) <= 4 for z in zs)
        print(f"T={T:<5} {n_ok}/10 |z|<=4  max|z|={max(map(abs, zs)):.2f}  p={p:.3g}  {'PASS' if rep.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
