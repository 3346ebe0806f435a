"""Kinetic and marginal equations on a state grid.

With ``D[i, j] = H[v_i, v_j]`` and ``r_i = sum_k D[i, k] f[i, k]`` (the
total shock-speed-weighted rate out of row ``i``), the kinetic operator is

    gain[i, j] = sum_k (D[k, j] - D[i, k]) f[i, k] f[k, j]
    loss[i, j] = (r_j - r_i) f[i, j]                         (form="paper")
    loss[i, j] = (r_j - D[i, j] s_j - r_i + D[i, j] s_i) f[i, j]   (loss-expanded)

where ``s`` are row sums. Both forms coincide when ``s`` is constant; the
loss-expanded form conserves every row sum even when it is not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .hamiltonian import Hamiltonian, dd_table, max_speed
from .state_space import (
    KernelTrajectory,
    MarginalMeasure,
    MarginalTrajectory,
    RateKernel,
    kernel_norm,
    validate_rate_kernel,
)

KineticForm = Literal["paper", "loss_expanded"]
DRIFT_FLAG = 1e-6


@dataclass(frozen=True)
class SolverScheme:
    variant: Literal["paper_euler", "rk4"] = "rk4"
    dt: float = 1e-3
    substeps_per_output: int = 1

    def __post_init__(self):
        if self.variant not in ("paper_euler", "rk4"):
            raise ValueError(f"unknown solver variant {self.variant!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps_per_output < 1:
            raise ValueError("substeps_per_output must be >= 1")

    def steps(self, T: float) -> tuple[int, float]:
        n = max(1, math.ceil(T / self.dt - 1e-9))
        return n, T / n


def _dd(H: Hamiltonian, grid) -> np.ndarray:
    if not math.isclose(H.P, grid.P, rel_tol=1e-12):
        raise ValueError(f"Hamiltonian is defined on [0, {H.P}] but the grid ends at {grid.P}")
    return dd_table(H, grid.states)


def _gain(F: np.ndarray, D: np.ndarray) -> np.ndarray:
    DF = D * F
    return F @ DF - DF @ F


def _rhs(F: np.ndarray, D: np.ndarray, form: str) -> np.ndarray:
    DF = D * F
    r = DF.sum(axis=1)
    gain = F @ DF - DF @ F
    if form == "paper":
        loss = (r[None, :] - r[:, None]) * F
    elif form == "loss_expanded":
        s = F.sum(axis=1)
        loss = (r[None, :] - r[:, None] - D * (s[None, :] - s[:, None])) * F
    else:
        raise ValueError(f"unknown operator form {form!r}")
    return np.triu(gain - loss)


def apply_kinetic_operator(f: RateKernel, H: Hamiltonian, form: KineticForm = "paper") -> RateKernel:
    """Right-hand side of the kinetic equation evaluated at ``f``."""
    D = _dd(H, f.grid)
    return RateKernel(f.grid, _rhs(np.asarray(f.rates), D, form))


def _marginal_rhs(w: np.ndarray, F: np.ndarray, D: np.ndarray) -> np.ndarray:
    DF = D * F
    return w @ DF - DF.sum(axis=1) * w


def apply_marginal_operator(ell: MarginalMeasure, f: RateKernel, H: Hamiltonian) -> np.ndarray:
    """Right-hand side of the marginal equation; entries sum to zero."""
    if ell.grid != f.grid:
        raise ValueError("marginal and kernel live on different grids")
    return _marginal_rhs(np.asarray(ell.weights), np.asarray(f.rates), _dd(H, f.grid))


def _positive_gain_weights(D: np.ndarray) -> np.ndarray:
    """W[i, k, j] = D[k, j] - D[i, k] on i <= k <= j, clipped at zero.

    Convexity makes these nonnegative; clipping removes roundoff so the
    Euler update is a sum of nonnegative terms.
    """
    n = len(D)
    W = D[None, :, :] - D[:, :, None]
    i, k, j = np.ogrid[:n, :n, :n]
    W = np.where((i <= k) & (k <= j), np.maximum(W, 0.0), 0.0)
    return W


def _euler_h_steps(G: np.ndarray, D: np.ndarray, c: float, T: float, n_steps: int, store_every: int):
    """Yield ``(t, h)`` for the rescaled scheme at stored steps.

    Each step is h <- h * (1 + dt (c + e (r_i - r_j))) + dt e gain(h) with
    e = exp(-c t_j); the multiplicative factor is >= 1 - roundoff because
    r_j <= c e^{c t_j}, so every entry stays nonnegative.
    """
    W = _positive_gain_weights(D)
    dt = T / n_steps
    h = G.copy()
    yield 0.0, h.copy()
    for j in range(n_steps):
        e = math.exp(-c * j * dt)
        r = (D * h).sum(axis=1)
        factor = 1.0 + dt * (c + e * (r[:, None] - r[None, :]))
        gain = np.einsum("ik,ikj,kj->ij", h, W, h)
        h = np.triu(h * factor + (dt * e) * gain)
        if (j + 1) % store_every == 0 or j + 1 == n_steps:
            yield (j + 1) * dt, h.copy()


@dataclass
class KineticSolution:
    trajectory: KernelTrajectory
    scheme: SolverScheme
    lam: float
    max_row_sum_drift: float
    min_entry: float
    h_final: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def drift_flagged(self) -> bool:
        return self.max_row_sum_drift > DRIFT_FLAG


def solve_kinetic(
    g: RateKernel,
    H: Hamiltonian,
    T: float,
    scheme: SolverScheme = SolverScheme(),
    *,
    form: KineticForm = "paper",
    validate: bool = True,
) -> KineticSolution:
    """Integrate the kinetic equation from ``g`` over ``[0, T]``.

    ``paper_euler`` integrates ``h = exp(c t) f`` with ``c = lambda H'(P)``
    and returns ``f = exp(-c t) h``; it requires ``dt <= 1/(2c)``. ``rk4``
    integrates ``f`` directly. ``validate=False`` skips the constant-rate
    check, for structural experiments with kernels outside the assumptions.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    lam = float(g.rates[-1, -1]) if g.rates[-1, -1] > 0 else float(g.rates[0].sum())
    if validate:
        report = validate_rate_kernel(g, lam)
        if not report.ok:
            raise ValueError(f"invalid rate kernel: {report}")
    D = _dd(H, g.grid)
    n_steps, dt = scheme.steps(T)
    every = scheme.substeps_per_output
    G = np.array(g.rates, dtype=float)
    times: list[float] = []
    kernels: list[np.ndarray] = []
    h_final = None
    if scheme.variant == "paper_euler":
        c = lam * max_speed(H)
        if c > 0 and dt > 1.0 / (2.0 * c) * (1 + 1e-12):
            raise ValueError(f"paper_euler needs dt <= 1/(2c) = {1 / (2 * c):.6g}, got {dt:.6g}")
        with np.errstate(over="ignore", invalid="ignore"):
            steps = list(_euler_h_steps(G, D, c, T, n_steps, every))
        for t, h in steps:
            times.append(t)
            kernels.append(math.exp(-c * t) * h)
            h_final = h
    else:
        F = G.copy()
        times.append(0.0)
        kernels.append(F.copy())
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(n_steps):
                k1 = _rhs(F, D, form)
                k2 = _rhs(F + 0.5 * dt * k1, D, form)
                k3 = _rhs(F + 0.5 * dt * k2, D, form)
                k4 = _rhs(F + dt * k3, D, form)
                F = F + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if (j + 1) % every == 0 or j + 1 == n_steps:
                    times.append((j + 1) * dt)
                    kernels.append(F.copy())
    stack = np.array(kernels)
    if not np.all(np.isfinite(stack)):
        raise FloatingPointError("kinetic solution became non-finite; the kernel is outside the well-posed class")
    initial_sums = G.sum(axis=1)
    drift = float(np.abs(stack.sum(axis=2) - initial_sums[None, :]).max())
    sol = KineticSolution(
        trajectory=KernelTrajectory(g.grid, np.array(times), stack),
        scheme=scheme,
        lam=lam,
        max_row_sum_drift=drift,
        min_entry=float(stack.min()),
        h_final=h_final,
    )
    if sol.drift_flagged:
        sol.notes.append(f"row-sum drift {drift:.3g} exceeds {DRIFT_FLAG:g}")
    return sol


def solve_marginal(
    f_traj: KernelTrajectory,
    H: Hamiltonian,
    T: float,
    scheme: SolverScheme = SolverScheme(),
) -> MarginalTrajectory:
    """Integrate the marginal equation from ``delta_0`` along ``f_traj``.

    Output times are the trajectory's stored times up to ``T``. Between
    stored kernels ``f`` is interpolated linearly and each interval is cut
    into substeps no longer than ``scheme.dt``.
    """
    if T > f_traj.T * (1 + 1e-12):
        raise ValueError(f"kernel trajectory ends at {f_traj.T}, before T = {T}")
    D = _dd(H, f_traj.grid)
    times = np.asarray(f_traj.times)
    stop = int(np.searchsorted(times, T * (1 - 1e-12), side="right"))
    out_t = list(times[:stop])
    if not math.isclose(out_t[-1], T, rel_tol=1e-12, abs_tol=0.0) and T > out_t[-1]:
        out_t.append(T)
    w = np.zeros(len(f_traj.grid))
    w[0] = 1.0
    weights = [w.copy()]
    kernels = f_traj.kernels

    def kernel_at(t):
        i = min(int(np.searchsorted(times, t, side="right")) - 1, len(times) - 1)
        if i == len(times) - 1 or t <= times[i]:
            return kernels[i]
        a = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - a) * kernels[i] + a * kernels[i + 1]

    for t0, t1 in zip(out_t[:-1], out_t[1:]):
        m = max(1, math.ceil((t1 - t0) / scheme.dt - 1e-9))
        h = (t1 - t0) / m
        for k in range(m):
            ta = t0 + k * h
            Fa = kernel_at(ta)
            if scheme.variant == "paper_euler":
                w = w + h * _marginal_rhs(w, Fa, D)
            else:
                Fm = kernel_at(ta + 0.5 * h)
                Fb = kernel_at(ta + h)
                k1 = _marginal_rhs(w, Fa, D)
                k2 = _marginal_rhs(w + 0.5 * h * k1, Fm, D)
                k3 = _marginal_rhs(w + 0.5 * h * k2, Fm, D)
                k4 = _marginal_rhs(w + h * k3, Fb, D)
                w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        weights.append(w.copy())
    return MarginalTrajectory(f_traj.grid, np.array(out_t), np.array(weights))


def _chain_indices(chain: Sequence[float], grid) -> list[int]:
    idx = [grid.index(v) for v in chain]
    if any(b < a for a, b in zip(idx, idx[1:])):
        raise ValueError("chain values must be nondecreasing")
    return idx


def lstar_weight(
    chain: Sequence[float],
    ell: MarginalMeasure,
    f: RateKernel,
    H: Hamiltonian,
    *,
    long_form: bool = False,
    form: KineticForm = "paper",
) -> float:
    """Relative time derivative of the candidate density along a value chain.

    Short form: marginal gain ratio at ``rho_0`` plus kinetic gain ratios
    along the chain, minus the speed-weighted exit rate of ``rho_n``. The
    long form sums the full operator ratios instead; the two agree because
    the loss terms telescope.
    """
    grid = f.grid
    idx = _chain_indices(chain, grid)
    D = _dd(H, grid)
    F = np.asarray(f.rates)
    w = np.asarray(ell.weights)
    if w[idx[0]] == 0:
        raise ZeroDivisionError(f"marginal vanishes at chain start rho_0 = {chain[0]}")
    for pos, (a, b) in enumerate(zip(idx, idx[1:]), start=1):
        if F[a, b] == 0:
            raise ZeroDivisionError(f"kernel vanishes on chain link {pos}: {chain[pos - 1]} -> {chain[pos]}")
    if long_form:
        L0 = _marginal_rhs(w, F, D)
        LK = _rhs(F, D, form)
        total = L0[idx[0]] / w[idx[0]]
        for a, b in zip(idx, idx[1:]):
            total += LK[a, b] / F[a, b]
        return float(total)
    DF = D * F
    gain = F @ DF - DF @ F
    total = (w @ DF)[idx[0]] / w[idx[0]] - DF[idx[-1]].sum()
    for a, b in zip(idx, idx[1:]):
        total += gain[a, b] / F[a, b]
    return float(total)


def chain_density(chain: Sequence[float], ell: MarginalMeasure, f: RateKernel) -> float:
    """``ell(rho_0) * prod f(rho_{j-1}, rho_j)`` for a grid value chain."""
    idx = _chain_indices(chain, f.grid)
    d = float(ell.weights[idx[0]])
    for a, b in zip(idx, idx[1:]):
        d *= float(f.rates[a, b])
    return d


@dataclass
class ConvergenceRow:
    n: int
    difference: float
    ratio: float | None


def convergence_study(g: RateKernel, H: Hamiltonian, T: float, n_values: Sequence[int]) -> list[ConvergenceRow]:
    """``||h^n(T) - h^{2n}(T)||`` for the rescaled Euler scheme.

    ``ratio`` compares each difference with the next one; first-order
    convergence gives ratios near 2.
    """
    if len(n_values) < 2:
        raise ValueError("need at least two resolutions")
    cache: dict[int, np.ndarray] = {}

    def h_at_T(n: int) -> np.ndarray:
        if n not in cache:
            sol = solve_kinetic(g, H, T, SolverScheme("paper_euler", T / n, n))
            cache[n] = sol.h_final
        return cache[n]

    diffs = [kernel_norm(h_at_T(n) - h_at_T(2 * n)) for n in n_values]
    rows = []
    for k, (n, d) in enumerate(zip(n_values, diffs)):
        ratio = None
        if k + 1 < len(diffs):
            nxt = diffs[k + 1]
            ratio = d / nxt if nxt > 0 else (math.nan if d > 0 else None)
        rows.append(ConvergenceRow(int(n), d, ratio))
    return rows
