"""Print the step-halving table for the rescaled Euler scheme.

    python3 scripts/convergence_table.py [n1 n2 ...]
"""

import sys

from stickyshock import StateGrid, convergence_study, quadratic, single_step


def main(argv):
    ns = [int(a) for a in argv] or [16, 32, 64, 128, 256, 512, 1024]
    grid = StateGrid([0.0, 1.0, 2.0])
    rows = convergence_study(single_step(grid, 1.0, 1.0), quadratic(2.0), 1.0, ns)
    print(f"{'n':>6}  {'||h^n - h^2n||':>16}  {'ratio':>7}")
    for r in rows:
        ratio = f"{r.ratio:7.3f}" if r.ratio is not None else "      -"
        print(f"{r.n:>6}  {r.difference:16.6e}  {ratio}")


if __name__ == "__main__":
    main(sys.argv[1:])
