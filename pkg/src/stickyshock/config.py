"""Experiment configuration: JSON file plus dotted-path overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .hamiltonian import Hamiltonian, polynomial, quadratic, scaled_quadratic, validate_hamiltonian
from .kinetic import SolverScheme
from .state_space import RateKernel, StateGrid, custom_matrix, single_step, uniform_up, validate_rate_kernel
from .statistics import DEFAULT_TEST_FUNCTIONS, TestFunction


class ConfigError(ValueError):
    """Invalid configuration; ``location`` is the dotted key at fault."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


@dataclass
class HamiltonianConfig:
    kind: str = "quadratic"  # quadratic | scaled_quadratic | polynomial
    P: float = 2.0
    c: float = 1.0
    coefficients: list | None = None


@dataclass
class GridConfig:
    K: int = 2
    states: list | None = None


@dataclass
class KernelConfig:
    generator: str = "single_step"  # single_step | uniform_up | custom_matrix
    lam: float = 1.0
    a: float = 1.0
    matrix: list | None = None


@dataclass
class DomainConfig:
    L: float = 5.0
    T: float = 1.0


@dataclass
class SolverConfig:
    scheme: str = "rk4"
    dt: float = 1e-3
    substeps_per_output: int = 1


@dataclass
class MonteCarloConfig:
    M: int = 100_000
    seed: int = 0
    workers: int = 1


@dataclass
class PropagationConfig:
    sim_dt: float = 1e-4
    test_functions: list | None = None  # [[alpha, beta, gamma], ...]


@dataclass
class CouplingConfig:
    L1: float = 5.0
    L2: float = 10.0


@dataclass
class Lemma5Config:
    T: float = 0.5
    dt: float = 0.02
    chains: list | None = None
    probe_times: list | None = None


@dataclass
class ConvergenceConfig:
    T: float = 1.0
    n_values: list = field(default_factory=lambda: [64, 128, 256, 512])


@dataclass
class BurgersConfig:
    a: float = 1.0
    lam: float = 1.0
    P: float = 40.0
    K: int = 40
    t_max: float = 0.2
    dt: float = 1e-3
    s_grid: list = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])


@dataclass
class SimulateConfig:
    paths: int = 10
    event_log: bool = False


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list = field(default_factory=lambda: ["json", "csv"])


@dataclass
class ExperimentConfig:
    hamiltonian: HamiltonianConfig = field(default_factory=HamiltonianConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    domain: DomainConfig = field(default_factory=DomainConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    lemma5: Lemma5Config = field(default_factory=Lemma5Config)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    burgers: BurgersConfig = field(default_factory=BurgersConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _build(cls, d, "")

    @classmethod
    def load(cls, path: str | Path | None, overrides: list[str] = ()) -> "ExperimentConfig":
        data: dict = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError("--config", str(e)) from e
        for item in overrides:
            apply_override(data, item)
        return cls.from_dict(data)

    # -- derived objects ---------------------------------------------------

    def build_hamiltonian(self) -> Hamiltonian:
        h = self.hamiltonian
        if h.kind == "quadratic":
            H = quadratic(h.P)
        elif h.kind == "scaled_quadratic":
            H = scaled_quadratic(h.c, h.P)
        elif h.kind == "polynomial":
            if not h.coefficients:
                raise ConfigError("hamiltonian.coefficients", "polynomial needs coefficients")
            H = polynomial(h.coefficients, h.P)
        else:
            raise ConfigError("hamiltonian.kind", f"unknown kind {h.kind!r}")
        report = validate_hamiltonian(H, 200)
        if not report.ok:
            raise ConfigError("hamiltonian", str(report))
        return H

    def build_grid(self) -> StateGrid:
        try:
            if self.grid.states is not None:
                grid = StateGrid(self.grid.states)
            else:
                grid = StateGrid.uniform(self.grid.K, self.hamiltonian.P)
        except ValueError as e:
            raise ConfigError("grid", str(e)) from e
        if grid.P != self.hamiltonian.P:
            raise ConfigError("grid.states", f"grid ends at {grid.P} but hamiltonian.P = {self.hamiltonian.P}")
        return grid

    def build_kernel(self, grid: StateGrid | None = None) -> RateKernel:
        grid = grid or self.build_grid()
        k = self.kernel
        try:
            if k.generator == "single_step":
                g = single_step(grid, k.a, k.lam)
            elif k.generator == "uniform_up":
                g = uniform_up(grid, k.lam)
            elif k.generator == "custom_matrix":
                if k.matrix is None:
                    raise ConfigError("kernel.matrix", "custom_matrix needs a matrix")
                g = custom_matrix(grid, k.matrix)
            else:
                raise ConfigError("kernel.generator", f"unknown generator {k.generator!r}")
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError("kernel", str(e)) from e
        report = validate_rate_kernel(g, k.lam)
        if not report.ok:
            raise ConfigError("kernel", str(report))
        return g

    def build_scheme(self) -> SolverScheme:
        try:
            return SolverScheme(self.solver.scheme, self.solver.dt, self.solver.substeps_per_output)
        except ValueError as e:
            raise ConfigError("solver", str(e)) from e

    def test_functions(self) -> tuple[TestFunction, ...]:
        spec = self.propagation.test_functions
        if spec is None:
            return DEFAULT_TEST_FUNCTIONS
        try:
            return tuple(TestFunction(*map(float, t)) for t in spec)
        except (TypeError, ValueError) as e:
            raise ConfigError("propagation.test_functions", str(e)) from e

    def validate(self) -> None:
        """Build every object once so violations surface before any compute."""
        self.build_hamiltonian()
        self.build_kernel()
        self.build_scheme()
        self.test_functions()
        if self.domain.L <= 0 or self.domain.T < 0:
            raise ConfigError("domain", "need L > 0 and T >= 0")
        if self.montecarlo.M < 2:
            raise ConfigError("montecarlo.M", "need at least 2 paths")
        if self.montecarlo.workers < 1:
            raise ConfigError("montecarlo.workers", "need at least 1 worker")


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(where or "<root>", f"expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        loc = f"{where}.{key}" if where else key
        if key not in known:
            raise ConfigError(loc, "unknown key")
        default = known[key].default_factory() if callable(known[key].default_factory) else None
        if is_dataclass(default):
            kwargs[key] = _build(type(default), value, loc)
        else:
            kwargs[key] = _coerce(cls, known[key], value, loc)
    return cls(**kwargs)


def _coerce(cls, f, value, loc):
    probe = getattr(cls(), f.name)
    if value is None or probe is None:
        return value
    if isinstance(probe, bool):
        if not isinstance(value, bool):
            raise ConfigError(loc, f"expected true/false, got {value!r}")
        return value
    if isinstance(probe, int) and not isinstance(probe, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(loc, f"expected an integer, got {value!r}")
        return value
    if isinstance(probe, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(loc, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(probe, str) and not isinstance(value, str):
        raise ConfigError(loc, f"expected a string, got {value!r}")
    if isinstance(probe, list) and not isinstance(value, list):
        raise ConfigError(loc, f"expected a list, got {value!r}")
    return value


def apply_override(data: dict, item: str) -> None:
    """Apply ``a.b.c=value`` to a nested dict; value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot descend into a non-object value")
    node[parts[-1]] = value
