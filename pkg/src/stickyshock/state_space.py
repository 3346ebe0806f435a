"""Grid-supported measures and rate kernels on ``[0, P]``.

A pure-jump chain started on a finite set with grid-supported jumps never
leaves the grid, so measures become weight vectors and kernels become
upper-triangular matrices (row = current state, column = target state).

Top-state convention: the row at ``P`` carries the single self-rate entry
``rates[K, K] = lambda``. Self-jumps are invisible to the particle system,
but with this entry every row has total rate ``lambda`` and the kinetic
operator conserves row sums exactly.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hamiltonian import ValidationReport, Violation

ROW_SUM_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateGrid:
    states: np.ndarray

    def __post_init__(self):
        v = _frozen(self.states)
        object.__setattr__(self, "states", v)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("a state grid needs at least the two states 0 and P")
        if v[0] != 0.0:
            raise ValueError(f"first grid state must be 0, got {v[0]}")
        if not np.all(np.diff(v) > 0):
            raise ValueError("grid states must be strictly increasing")
        object.__setattr__(self, "_index", {float(x): i for i, x in enumerate(v)})

    @classmethod
    def uniform(cls, K: int, P: float) -> "StateGrid":
        """``K + 1`` equispaced states ``0, P/K, ..., P``."""
        if K < 1:
            raise ValueError("K must be >= 1")
        states = np.linspace(0.0, float(P), K + 1)
        states[-1] = float(P)
        return cls(states)

    @property
    def K(self) -> int:
        return len(self.states) - 1

    @property
    def P(self) -> float:
        return float(self.states[-1])

    def __len__(self):
        return len(self.states)

    def index(self, value: float) -> int:
        try:
            return self._index[float(value)]
        except KeyError:
            raise ValueError(f"{value} is not a grid state") from None

    def __eq__(self, other):
        return isinstance(other, StateGrid) and np.array_equal(self.states, other.states)

    def __hash__(self):
        return hash(self.states.tobytes())


@dataclass(frozen=True, eq=False)
class MarginalMeasure:
    grid: StateGrid
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (len(self.grid),):
            raise ValueError(f"marginal has {w.shape} weights for a grid of {len(self.grid)} states")
        object.__setattr__(self, "weights", w)

    @classmethod
    def delta(cls, grid: StateGrid, value: float = 0.0) -> "MarginalMeasure":
        w = np.zeros(len(grid))
        w[grid.index(value)] = 1.0
        return cls(grid, w)

    def total(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class RateKernel:
    """Row ``i`` is the (signed) jump measure out of state ``v_i``."""

    grid: StateGrid
    rates: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rates)
        n = len(self.grid)
        if r.shape != (n, n):
            raise ValueError(f"kernel of shape {r.shape} does not match a grid of {n} states")
        object.__setattr__(self, "rates", r)

    def row_sums(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def __add__(self, other: "RateKernel") -> "RateKernel":
        return RateKernel(self.grid, self.rates + other.rates)

    def __rmul__(self, a: float) -> "RateKernel":
        return RateKernel(self.grid, a * self.rates)


def tv_norm(m) -> float:
    """Total variation of a grid measure: the sum of absolute weights."""
    w = np.asarray(m.weights if isinstance(m, MarginalMeasure) else m, dtype=float)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("measure has non-finite entries")
    return float(np.abs(w).sum())


def kernel_norm(k) -> float:
    """Supremum over rows of the row's total variation."""
    r = np.asarray(k.rates if isinstance(k, RateKernel) else k, dtype=float)
    if not np.all(np.isfinite(r)):
        raise FloatingPointError("kernel has non-finite entries")
    if r.size == 0:
        return 0.0
    return float(np.abs(r).sum(axis=1).max())


def validate_rate_kernel(g: RateKernel, lam: float, strict_support: bool = False) -> ValidationReport:
    """Check nonnegativity, triangularity and constant total rate ``lam``.

    Rows below ``P`` must sum to ``lam`` and the top row must carry the
    conventional self-rate ``lam``. With ``strict_support`` the column at
    ``P`` must also vanish below the top row.
    """
    r = g.rates
    K = g.grid.K
    report = ValidationReport()
    if not np.all(np.isfinite(r)):
        report.violations.append(Violation("finite", None, math.nan, "non-finite kernel entries"))
        return report
    neg = np.argwhere(r < 0)
    for i, j in neg:
        report.violations.append(Violation("nonnegativity", (int(i), int(j)), float(r[i, j])))
    lower = np.argwhere(np.tril(r, -1) != 0)
    for i, j in lower:
        report.violations.append(Violation("triangularity", (int(i), int(j)), float(r[i, j])))
    diag = np.diag(r)
    for i in range(K):
        if diag[i] != 0:
            report.violations.append(
                Violation("triangularity", (i, i), float(diag[i]), "self-rate only allowed at the top state")
            )
    sums = r.sum(axis=1)
    for i in range(K):
        if abs(sums[i] - lam) > ROW_SUM_TOL:
            report.violations.append(
                Violation("constant_rate", i, float(sums[i]), f"row sum {sums[i]:.12g} != lambda {lam:.12g}")
            )
    if abs(r[K, K] - lam) > ROW_SUM_TOL:
        report.violations.append(
            Violation("top_state", K, float(r[K, K]), f"top self-rate {r[K, K]:.12g} != lambda {lam:.12g}")
        )
    if strict_support:
        for i in range(K):
            if r[i, K] != 0:
                report.violations.append(
                    Violation("support", (i, K), float(r[i, K]), "jump into P from below the top state")
                )
    return report


def _top_row(rates: np.ndarray, lam: float) -> None:
    rates[-1, :] = 0.0
    rates[-1, -1] = lam


def single_step(grid: StateGrid, a: float, lam: float) -> RateKernel:
    """Every state jumps up by ``a`` at rate ``lam``; overshoot lands on P."""
    K = grid.K
    rates = np.zeros((K + 1, K + 1))
    for i in range(K):
        target = float(grid.states[i]) + a
        j = int(np.searchsorted(grid.states, target - 1e-12 * max(1.0, abs(target))))
        if j > K:
            j = K
        if j <= i:
            raise ValueError(f"jump size {a} does not reach the next grid state from {grid.states[i]}")
        if not math.isclose(float(grid.states[j]), min(target, grid.P), rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"jump target {target} is not a grid state")
        rates[i, j] = lam
    _top_row(rates, lam)
    return RateKernel(grid, rates)


def uniform_up(grid: StateGrid, lam: float) -> RateKernel:
    """Jump from ``v_i`` to each higher state with equal rate."""
    K = grid.K
    rates = np.zeros((K + 1, K + 1))
    for i in range(K):
        rates[i, i + 1 :] = lam / (K - i)
    _top_row(rates, lam)
    return RateKernel(grid, rates)


def custom_matrix(grid: StateGrid, matrix: Sequence[Sequence[float]]) -> RateKernel:
    return RateKernel(grid, np.asarray(matrix, dtype=float))


@dataclass(frozen=True, eq=False)
class KernelTrajectory:
    """Kernels stored at increasing times, read back piecewise-constant-left.

    ``at(t)`` returns the kernel stored at the last time ``<= t``.
    """

    grid: StateGrid
    times: np.ndarray
    kernels: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        k = _frozen(self.kernels)
        n = len(self.grid)
        if t.ndim != 1 or len(t) == 0 or t[0] != 0.0:
            raise ValueError("trajectory times must start at 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if k.shape != (len(t), n, n):
            raise ValueError(f"kernels have shape {k.shape}, expected {(len(t), n, n)}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "kernels", k)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def covers(self, s: float, t: float) -> bool:
        return 0.0 <= s <= t <= self.T * (1 + 1e-12)

    def index_at(self, t: float) -> int:
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"time {t} outside the trajectory's range [0, {self.T}]")
        return bisect_right(self.times, t) - 1

    def at(self, t: float) -> RateKernel:
        return RateKernel(self.grid, self.kernels[self.index_at(t)])

    def final(self) -> RateKernel:
        return RateKernel(self.grid, self.kernels[-1])


@dataclass(frozen=True, eq=False)
class MarginalTrajectory:
    grid: StateGrid
    times: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "weights", _frozen(self.weights))

    def at(self, t: float) -> MarginalMeasure:
        i = bisect_right(self.times, t) - 1
        if i < 0 or t > self.times[-1] * (1 + 1e-12):
            raise ValueError(f"time {t} outside the trajectory's range")
        return MarginalMeasure(self.grid, self.weights[i])

    def final(self) -> MarginalMeasure:
        return MarginalMeasure(self.grid, self.weights[-1])
