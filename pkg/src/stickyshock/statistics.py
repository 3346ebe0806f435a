"""Observables of configurations, Monte Carlo estimators and report records."""

from __future__ import annotations

import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .particles import Configuration
from .sampling import RandomStreamPolicy

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TestFunction:
    """J(x) = alpha * exp(-beta x) + gamma with nonnegative parameters."""

    __test__ = False  # not a pytest class

    alpha: float
    beta: float
    gamma: float = 0.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("test function parameters must be nonnegative")

    def __call__(self, x: float) -> float:
        return self.alpha * math.exp(-self.beta * x) + self.gamma


DEFAULT_TEST_FUNCTIONS = (
    TestFunction(1.0, 0.0, 0.0),
    TestFunction(0.5, 0.2, 0.0),
    TestFunction(1.0, 0.5, 0.0),
    TestFunction(1.0, 1.0, 0.0),
    TestFunction(2.0, 2.0, 0.0),
    TestFunction(1.0, 5.0, 0.0),
    TestFunction(0.5, 0.5, 0.1),
    TestFunction(1.0, 0.2, 0.2),
    TestFunction(0.3, 1.0, 0.05),
    TestFunction(2.0, 0.1, 0.0),
)


def path_measure(q: Configuration) -> list[tuple[float, float]]:
    """Atoms of the jump measure: ``(0, rho_0)`` then ``(x_i, rho_i - rho_{i-1})``."""
    r = q.values
    return [(0.0, r[0])] + [(x, r[i + 1] - r[i]) for i, x in enumerate(q.positions)]


def evaluate_solution(q: Configuration, x: float) -> float:
    """Right-continuous step function value at ``x``."""
    if not (0.0 <= x <= q.L):
        raise ValueError(f"x = {x} outside [0, {q.L}]")
    return q.values[bisect_right(q.positions, x)]


def laplace_functional(q: Configuration, J: Callable[[float], float]) -> float:
    return math.exp(-sum(m * J(x) for x, m in path_measure(q)))


def laplace_functionals(q: Configuration, family: Sequence[TestFunction]) -> list[float]:
    atoms = path_measure(q)
    return [math.exp(-sum(m * J(x) for x, m in atoms)) for J in family]


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    M = len(v)
    if M < 2:
        raise ValueError("need at least two samples")
    mean = float(np.sum(v) / M)
    var = float(np.sum((v - mean) ** 2) / (M - 1))
    return mean, math.sqrt(var / M)


def estimate_mean(functional: Callable[[np.random.Generator], float], M: int, seed: int) -> tuple[float, float]:
    """Mean and standard error of ``functional`` over ``M`` independent paths.

    Path ``i`` receives substream ``i`` of ``seed``.
    """
    if M < 2:
        raise ValueError("need M >= 2 paths")
    policy = RandomStreamPolicy(seed)
    return mean_and_stderr([functional(policy.generator(i)) for i in range(M)])


def two_sample_z(m1: float, s1: float, m2: float, s2: float) -> float:
    se = math.hypot(s1, s2)
    if se == 0.0:
        return 0.0 if m1 == m2 else math.copysign(math.inf, m1 - m2)
    return (m1 - m2) / se


def chi_square_against(counts: Sequence[int], probs: Sequence[float], min_expected: float = 5.0) -> tuple[float, float, int]:
    """Chi-square goodness of fit; bins with small expectation are pooled.

    Returns ``(statistic, p_value, degrees_of_freedom)``. Observations in a
    bin of zero probability give ``p = 0``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    M = counts.sum()
    expected = M * probs
    if np.any((expected <= 1e-12 * max(M, 1)) & (counts > 0)):
        return math.inf, 0.0, 0
    big = expected >= min_expected
    obs = list(counts[big])
    exp = list(expected[big])
    if (~big).any() and expected[~big].sum() > 0:
        obs.append(counts[~big].sum())
        exp.append(expected[~big].sum())
    if len(obs) < 2:
        return 0.0, 1.0, 0
    stat, p = sps.chisquare(obs, exp)
    return float(stat), float(p), len(obs) - 1


@dataclass
class Statistic:
    name: str
    estimate: float
    stderr: float | None = None
    reference: float | None = None
    reference_stderr: float | None = None
    score: float | None = None
    score_kind: str = ""
    threshold: float | None = None
    passed: bool | None = None
    note: str = ""


@dataclass
class ExperimentReport:
    experiment: str
    parameters: dict
    statistics: list[Statistic] = field(default_factory=list)
    seed: int | None = None
    M: int | None = None
    rule: str = ""
    passed: bool = True
    notes: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        d = dict(d)
        d["statistics"] = [Statistic(**s) for s in d.get("statistics", [])]
        return cls(**d)

    def fingerprint(self) -> str:
        """Digest of every field except the wall-clock time."""
        d = self.to_dict()
        d.pop("wall_time")
        blob = json.dumps(d, sort_keys=True, default=_json_default, allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.experiment}: {verdict} ({self.rule})"


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
