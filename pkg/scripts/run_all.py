"""Run every experiment subcommand with the bundled configs.

    python3 scripts/run_all.py [--quick] [--workers N] [--out results]

``--quick`` cuts the Monte Carlo path counts by 10x. Exit status is the
worst exit code seen.
"""

import argparse
import sys
from pathlib import Path

from stickyshock.cli import run

HERE = Path(__file__).parent
THREE = str(HERE / "configs" / "three_state.json")
COUPLING = str(HERE / "configs" / "coupling_unit.json")

PLAN = [
    ("solve-kinetic", THREE, []),
    ("solve-marginal", THREE, []),
    ("simulate", THREE, ["simulate.event_log=true"]),
    ("convergence-study", THREE, []),
    ("verify-lemma5", THREE, []),
    ("burgers-check", THREE, []),
    ("verify-propagation", THREE, []),
    ("verify-coupling", COUPLING, []),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    worst = 0
    for name, config, extra in PLAN:
        argv = [name, "--config", config, "--workers", str(args.workers), "--out", f"{args.out}/{name}"]
        for item in extra:
            argv += ["--set", item]
        if args.quick:
            M = 1000 if name == "verify-coupling" else 10_000
            argv += ["--set", f"montecarlo.M={M}"]
        code = run(argv)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
