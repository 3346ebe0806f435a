"""Command-line entry point: ``stickyshock <subcommand> [--config ...]``.

Exit codes: 0 pass, 1 statistical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig
from .experiments import burgers_closure_check, solve_both, verify_coupling, verify_lstar, verify_propagation
from .hamiltonian import max_speed
from .kinetic import SolverScheme, convergence_study, solve_kinetic
from .particles import simulate_pdmp
from .sampling import BOUNDARY, INITIAL, RandomStreamPolicy, sample_initial_path
from .statistics import SCHEMA_VERSION, ExperimentReport, Statistic, _json_default

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

SUBCOMMANDS = (
    "solve-kinetic",
    "solve-marginal",
    "simulate",
    "verify-propagation",
    "verify-coupling",
    "verify-lemma5",
    "convergence-study",
    "burgers-check",
)

SUMMARY_COLUMNS = [
    "name",
    "estimate",
    "stderr",
    "reference",
    "reference_stderr",
    "score",
    "score_kind",
    "threshold",
    "passed",
    "note",
]


# ----------------------------------------------------------------- artifacts


def _header(config: dict, extra: dict | None = None) -> str:
    lines = ["# config: " + json.dumps(config, sort_keys=True, default=_json_default)]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: " + json.dumps(v, default=_json_default))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns: Sequence[str], rows, config: dict | None = None, extra: dict | None = None) -> Path:
    """Tidy CSV with a ``#`` header block holding the resolved config."""
    buf = io.StringIO()
    if config is not None:
        buf.write(_header(config, extra))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> list[dict]:
    """Inverse of :func:`write_csv`, skipping the header block."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def emit_report(
    report: ExperimentReport, out_dir: str | Path, formats: Sequence[str] = ("json",), config: dict | None = None
) -> list[Path]:
    """Write ``report.json`` always and ``summary.csv`` when ``"csv"`` is requested."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    if config is not None:
        doc["config"] = config
    path = out / "report.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n")
    written = [path]
    if "csv" in formats:
        rows = [[getattr(s, c) for c in SUMMARY_COLUMNS] for s in report.statistics]
        written.append(write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows, config, {"seed": report.seed}))
    return written


def load_report(path: str | Path) -> ExperimentReport:
    doc = json.loads(Path(path).read_text())
    doc.pop("config", None)
    return ExperimentReport.from_dict(doc)


# --------------------------------------------------------------- subcommands


def _kinetic_rows(traj):
    K = len(traj.grid)
    for t, F in zip(traj.times, traj.kernels):
        for i in range(K):
            for j in range(K):
                yield (float(t), i, j, float(F[i, j]))


def _marginal_rows(marg):
    for t, w in zip(marg.times, marg.weights):
        for i, x in enumerate(w):
            yield (float(t), i, float(x))


def _grid_extra(grid) -> dict:
    return {"grid_states": [float(s) for s in grid.states]}


def run_solve_kinetic(cfg: ExperimentConfig, out: Path, resolved: dict, *, marginal: bool) -> ExperimentReport:
    t0 = time.perf_counter()
    H = cfg.build_hamiltonian()
    g = cfg.build_kernel()
    scheme = cfg.build_scheme()
    T = cfg.domain.T
    if marginal:
        sol, marg = solve_both(g, H, T, scheme)
    else:
        sol, marg = solve_kinetic(g, H, T, scheme), None
    extra = _grid_extra(g.grid)
    write_csv(out / "kinetic_trajectory.csv", ["t", "i", "j", "f_ij"], _kinetic_rows(sol.trajectory), resolved, extra)
    initial = g.rates.sum(axis=1)
    drift = float(np.abs(sol.trajectory.kernels.sum(axis=2) - initial[None, :]).max())
    stats = [
        Statistic("max_row_sum_drift", drift, threshold=1e-8, score=drift, score_kind="abs", passed=drift <= 1e-8),
        Statistic("min_entry", sol.min_entry),
    ]
    if marg is not None:
        write_csv(out / "marginal_trajectory.csv", ["t", "i", "ell_i"], _marginal_rows(marg), resolved, extra)
        mass = float(np.abs(marg.weights.sum(axis=1) - 1.0).max())
        stats.append(Statistic("max_mass_drift", mass, threshold=1e-8, score=mass, score_kind="abs", passed=mass <= 1e-8))
        stats.append(Statistic("min_marginal_weight", float(marg.weights.min())))
    passed = all(s.passed for s in stats if s.passed is not None)
    return ExperimentReport(
        experiment="solve-marginal" if marginal else "solve-kinetic",
        parameters={"T": T, "solver": {"variant": scheme.variant, "dt": scheme.dt}, "hamiltonian": H.describe()},
        statistics=stats,
        rule="row sums (and total marginal mass) constant within 1e-8",
        passed=passed,
        notes=list(sol.notes),
        wall_time=time.perf_counter() - t0,
    )


def run_simulate(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    H = cfg.build_hamiltonian()
    g = cfg.build_kernel()
    lam, L, T = cfg.kernel.lam, cfg.domain.L, cfg.domain.T
    seed = cfg.montecarlo.seed
    traj = solve_kinetic(g, H, T, cfg.build_scheme()).trajectory if T > 0 else None
    policy = RandomStreamPolicy(seed)
    rows, events = [], []
    n_final = []
    for p in range(cfg.simulate.paths):
        q0 = sample_initial_path(g, lam, L, policy.generator(p, INITIAL))
        log = [] if cfg.simulate.event_log else None
        q = q0
        if traj is not None:
            q = simulate_pdmp(q0, H, traj, 0.0, T, policy.generator(p, BOUNDARY), log=log)
        for stage, c in (("initial", q0), ("final", q)):
            rows.append((p, stage, 0, 0.0, c.values[0]))
            for k, x in enumerate(c.positions, start=1):
                rows.append((p, stage, k, x, c.values[k]))
        n_final.append(q.n)
        for e in log or ():
            events.append((p, *e))
    extra = {"seed": seed, **_grid_extra(g.grid)}
    write_csv(out / "paths.csv", ["path", "stage", "k", "x", "rho"], rows, resolved, extra)
    if cfg.simulate.event_log:
        write_csv(out / "events.csv", ["path", "time", "kind", "index"], events, resolved, extra)
    return ExperimentReport(
        experiment="simulate",
        parameters={"lambda": lam, "L": L, "T": T, "paths": cfg.simulate.paths},
        statistics=[Statistic("mean_final_shocks", float(np.mean(n_final)) if n_final else 0.0)],
        seed=seed,
        M=cfg.simulate.paths,
        rule="sample paths emitted",
        passed=True,
        wall_time=time.perf_counter() - t0,
    )


def run_propagation(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    scheme = SolverScheme(cfg.solver.scheme, cfg.propagation.sim_dt)
    return verify_propagation(
        cfg.build_kernel(),
        cfg.build_hamiltonian(),
        cfg.kernel.lam,
        cfg.domain.L,
        cfg.domain.T,
        cfg.montecarlo.M,
        cfg.test_functions(),
        seed=cfg.montecarlo.seed,
        workers=cfg.montecarlo.workers,
        scheme=scheme,
    )


def run_coupling(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    H = cfg.build_hamiltonian()
    c = cfg.coupling
    T = cfg.domain.T
    if not c.L1 < c.L2:
        raise ConfigError("coupling", "need L1 < L2")
    if not T * max_speed(H) < c.L1:
        raise ConfigError("coupling.L1", "need domain.T * H'(P) < L1")
    return verify_coupling(
        cfg.build_kernel(),
        H,
        cfg.kernel.lam,
        c.L1,
        c.L2,
        T,
        cfg.montecarlo.M,
        seed=cfg.montecarlo.seed,
        workers=cfg.montecarlo.workers,
        scheme=cfg.build_scheme(),
    )


def _default_chains(grid) -> list[list[float]]:
    v = [float(s) for s in grid.states]
    chains = [[a] for a in v]
    chains += [[a, b] for i, a in enumerate(v) for b in v[i:]]
    return chains


def run_lemma5(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    g = cfg.build_kernel()
    c = cfg.lemma5
    chains = c.chains if c.chains is not None else _default_chains(g.grid)
    return verify_lstar(g, cfg.build_hamiltonian(), cfg.kernel.lam, c.T, chains, c.dt, probe_times=c.probe_times)


def run_convergence(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    t0 = time.perf_counter()
    g = cfg.build_kernel()
    c = cfg.convergence
    rows = convergence_study(g, cfg.build_hamiltonian(), c.T, c.n_values)
    write_csv(out / "convergence.csv", ["n", "difference", "ratio"], [(r.n, r.difference, r.ratio) for r in rows], resolved)
    stats = []
    for r in rows:
        if r.ratio is None:
            stats.append(Statistic(f"difference[n={r.n}]", r.difference))
            continue
        ok = math.isfinite(r.ratio) and abs(r.ratio - 2.0) <= 0.4
        stats.append(
            Statistic(
                f"ratio[n={r.n}]",
                r.ratio,
                reference=2.0,
                score=abs(r.ratio - 2.0) / 2.0,
                score_kind="relative_deviation",
                threshold=0.2,
                passed=ok,
                note=f"difference={r.difference!r}",
            )
        )
    return ExperimentReport(
        experiment="convergence-study",
        parameters={"T": c.T, "n_values": list(c.n_values)},
        statistics=stats,
        rule="successive difference ratios within 20% of 2",
        passed=all(s.passed for s in stats if s.passed is not None),
        wall_time=time.perf_counter() - t0,
    )


def run_burgers(cfg: ExperimentConfig, out: Path, resolved: dict) -> ExperimentReport:
    b = cfg.burgers
    return burgers_closure_check(a=b.a, lam=b.lam, t_max=b.t_max, s_grid=b.s_grid, P=b.P, K=b.K, dt=b.dt)


RUNNERS = {
    "solve-kinetic": lambda c, o, r: run_solve_kinetic(c, o, r, marginal=False),
    "solve-marginal": lambda c, o, r: run_solve_kinetic(c, o, r, marginal=True),
    "simulate": run_simulate,
    "verify-propagation": run_propagation,
    "verify-coupling": run_coupling,
    "verify-lemma5": run_lemma5,
    "convergence-study": run_convergence,
    "burgers-check": run_burgers,
}


# -------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", metavar="DIR")
    parser = argparse.ArgumentParser(prog="stickyshock", description="Kinetic solver and sticky-particle experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"montecarlo.seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"montecarlo.workers={args.workers}")
    if args.out is not None:
        overrides.append("output.directory=" + json.dumps(args.out))
    cfg = ExperimentConfig.load(args.config, overrides)
    cfg.validate()
    return cfg


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_PASS
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    resolved = cfg.to_dict()
    out = Path(cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        report = RUNNERS[args.command](cfg, out, resolved)
        emit_report(report, out, cfg.output.formats, resolved)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(report.summary())
    return EXIT_PASS if report.passed else EXIT_FAIL


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main", "emit_report", "load_report", "write_csv", "read_csv", "SCHEMA_VERSION"]
