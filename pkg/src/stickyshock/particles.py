"""Annihilating shock particles on ``[0, L]`` with random entries at ``x = L``.

A configuration ``(x_1 < ... < x_n; rho_0 <= ... <= rho_n)`` encodes a
nondecreasing step function. Shock ``i`` separates ``rho_{i-1}`` from
``rho_i`` and moves at ``-H[rho_{i-1}, rho_i]``. When shocks ``i`` and
``i+1`` meet, shock ``i`` and the value ``rho_i`` disappear; a shock
reaching ``x = 0`` leaves and ``rho_0`` is replaced by ``rho_1``.

Internally every particle is tracked by its intercept ``a`` and velocity
``v`` (position ``a + v t`` at absolute time ``t``), so event times depend
only on the particles involved. Two runs that share a particle history
therefore produce bit-identical positions for it.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .hamiltonian import Hamiltonian, dd_table, divided_difference, max_speed
from .state_space import KernelTrajectory


@dataclass(frozen=True)
class Configuration:
    positions: tuple[float, ...]
    values: tuple[float, ...]
    L: float

    def __post_init__(self):
        x = tuple(float(p) for p in self.positions)
        r = tuple(float(p) for p in self.values)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "values", r)
        if not self.L > 0:
            raise ValueError("L must be positive")
        if len(r) != len(x) + 1:
            raise ValueError(f"{len(x)} positions need {len(x) + 1} values, got {len(r)}")
        if x and not (0.0 < x[0] and x[-1] <= self.L):
            raise ValueError(f"positions must lie in (0, {self.L}]")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("positions must be strictly increasing")
        if any(b < a for a, b in zip(r, r[1:])):
            raise ValueError("values must be nondecreasing")

    @property
    def n(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Event:
    """Next event after the current time; ``time`` is an offset.

    ``index`` is 1-based: for a collision it names the shock that is
    annihilated (it meets shock ``index + 1``); for a boundary entry it is
    the entering value.
    """

    time: float
    kind: str  # "exit_at_zero" | "collision" | "boundary_entry" | "horizon"
    index: float | None = None


def shock_velocities(q: Configuration, H: Hamiltonian) -> list[float]:
    r = q.values
    return [-divided_difference(H, (r[i - 1], r[i])) for i in range(1, len(r))]


class _Flow:
    """Mutable particle state on an absolute clock (hot loop of the simulator)."""

    __slots__ = ("a", "v", "idx", "D", "states", "L", "t", "log")

    def __init__(self, a, v, idx, D, states, L, t, log=None):
        self.a = a
        self.v = v
        self.idx = idx
        self.D = D
        self.states = states
        self.L = L
        self.t = t
        self.log = log

    @classmethod
    def start(cls, q: Configuration, D, states, index_of, t0: float, log=None) -> "_Flow":
        idx = [index_of(r) for r in q.values]
        v = [-D[idx[i]][idx[i + 1]] for i in range(len(idx) - 1)]
        if t0 == 0.0:
            a = list(q.positions)
        else:
            a = [x - vi * t0 for x, vi in zip(q.positions, v)]
        return cls(a, v, idx, D, states, q.L, t0, log)

    def next_event(self):
        """(absolute time, kind, 0-based index) of the next event, or None."""
        a, v = self.a, self.v
        n = len(a)
        if n == 0:
            return None
        t_now = self.t
        best_t = math.inf
        best = None
        if v[0] < 0.0:
            te = -a[0] / v[0]
            best_t = te if te > t_now else t_now
            best = ("exit_at_zero", 0)
        for i in range(n - 1):
            dv = v[i] - v[i + 1]
            if dv > 0.0:
                tc = (a[i + 1] - a[i]) / dv
                if tc < t_now:
                    tc = t_now
                if tc < best_t:
                    best_t = tc
                    best = ("collision", i)
        if best is None:
            return None
        return best_t, best[0], best[1]

    def _collide(self, i: int, tc: float) -> None:
        a, v, idx = self.a, self.v, self.idx
        x = a[i + 1] + v[i + 1] * tc
        del a[i], v[i], idx[i + 1]
        vn = -self.D[idx[i]][idx[i + 1]]
        v[i] = vn
        a[i] = x - vn * tc
        if self.log is not None:
            self.log.append((tc, "collision", i + 1))

    def _exit(self, te: float) -> None:
        del self.a[0], self.v[0], self.idx[0]
        if self.log is not None:
            self.log.append((te, "exit_at_zero", 1))

    def run_until(self, t_end: float) -> None:
        while True:
            ev = self.next_event()
            if ev is None or ev[0] > t_end:
                break
            te, kind, i = ev
            self.t = te
            if kind == "exit_at_zero":
                self._exit(te)
            else:
                self._collide(i, te)
        self.t = t_end

    def insert(self, j: int, tau: float) -> None:
        idx = self.idx
        if j <= idx[-1]:
            raise ValueError(f"entry value index {j} does not exceed the boundary value index {idx[-1]}")
        L = self.L
        if self.a and self.a[-1] + self.v[-1] * tau >= L:
            raise RuntimeError("a particle already sits at x = L; advance before inserting")
        vn = -self.D[idx[-1]][j]
        self.a.append(L - vn * tau)
        self.v.append(vn)
        idx.append(j)
        if self.log is not None:
            self.log.append((tau, "boundary_entry", float(self.states[j])))

    def configuration(self) -> Configuration:
        t = self.t
        # Roundoff can leave a pair that meets an ulp after t_end touching.
        while True:
            xs = [ai + vi * t for ai, vi in zip(self.a, self.v)]
            if xs and xs[0] <= 0.0:
                self._exit(t)
                continue
            bad = next((i for i in range(len(xs) - 1) if xs[i + 1] <= xs[i]), None)
            if bad is None:
                break
            self._collide(bad, t)
        xs = [min(x, self.L) for x in xs]
        return Configuration(tuple(xs), tuple(float(self.states[k]) for k in self.idx), self.L)


def _local_flow(q: Configuration, H: Hamiltonian, t0: float = 0.0, log=None) -> _Flow:
    states = sorted(set(q.values))
    D = dd_table(H, states).tolist()
    pos = {s: k for k, s in enumerate(states)}
    return _Flow.start(q, D, states, pos.__getitem__, t0, log)


def next_deterministic_event(q: Configuration, H: Hamiltonian, horizon: float) -> Event:
    """Earliest exit at ``x = 0``, collision, or the horizon (offsets from now)."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    ev = _local_flow(q, H).next_event()
    if ev is None or ev[0] > horizon:
        return Event(float(horizon), "horizon")
    return Event(ev[0], ev[1], ev[2] + 1)


def advance_deterministic(q: Configuration, H: Hamiltonian, dt: float, log: list | None = None) -> Configuration:
    """Deterministic annihilating flow over ``dt`` with no boundary entries."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return q
    flow = _local_flow(q, H, 0.0, log)
    flow.run_until(dt)
    return flow.configuration()


def insert_particle(q: Configuration, rho_plus: float) -> Configuration:
    """Append a shock at ``x = L`` raising the boundary value to ``rho_plus``."""
    if not rho_plus > q.values[-1]:
        raise ValueError(f"entry value {rho_plus} must exceed the boundary value {q.values[-1]}")
    if q.positions and q.positions[-1] >= q.L:
        raise RuntimeError("a particle already sits at x = L; advance before inserting")
    return Configuration(q.positions + (q.L,), q.values + (float(rho_plus),), q.L)


class BoundaryProcess:
    """Thinning tables for entries at ``x = L`` along a kernel trajectory.

    At time ``tau`` with boundary value ``rho_n`` the entry rate into
    ``rho_+`` is ``H[rho_n, rho_+] f(tau, rho_n, rho_+)``; self-jumps at
    the top state are dropped. Proposals arrive at the envelope rate
    ``lambda H'(P)``, which dominates every total rate.
    """

    def __init__(self, H: Hamiltonian, f_traj: KernelTrajectory):
        grid = f_traj.grid
        self.grid = grid
        self.states = [float(s) for s in grid.states]
        self.index_of = {s: k for k, s in enumerate(self.states)}.__getitem__
        D = dd_table(H, grid.states)
        self.D = D.tolist()
        self.times = [float(t) for t in f_traj.times]
        self.T = f_traj.T
        K = grid.K
        lam = float(f_traj.kernels[0].sum(axis=1).max())
        self.lam = lam
        self.envelope = lam * max_speed(H)
        W = D[None, :, :] * np.triu(f_traj.kernels, 1)
        W = np.maximum(W, 0.0)
        rates = W.sum(axis=2)
        if np.any(rates > self.envelope * (1 + 1e-9) + 1e-15):
            raise ValueError("entry rate exceeds the thinning envelope lambda H'(P)")
        self.rates = rates.tolist()
        with np.errstate(invalid="ignore", divide="ignore"):
            cdf = np.cumsum(W, axis=2) / rates[:, :, None]
        cdf = np.nan_to_num(cdf, nan=1.0)
        cdf[:, :, K] = 1.0
        self.cdf = cdf.tolist()

    def time_index(self, tau: float) -> int:
        return bisect_right(self.times, tau) - 1

    def acceptance(self, tau: float, i: int) -> float:
        if self.envelope == 0:
            return 0.0
        return self.rates[self.time_index(tau)][i] / self.envelope

    def draw_target(self, k: int, i: int, u: float) -> int:
        row = self.cdf[k][i]
        j = bisect_right(row, u)
        return min(j, len(row) - 1)


def simulate_pdmp(
    q: Configuration,
    H: Hamiltonian,
    f_traj: KernelTrajectory,
    s: float,
    t: float,
    rng: np.random.Generator,
    *,
    boundary: BoundaryProcess | None = None,
    log: list | None = None,
) -> Configuration:
    """Random evolution from time ``s`` to ``t`` with entries at ``x = L``.

    Entry proposals form a Poisson stream at the envelope rate; a proposal
    at ``tau`` is accepted with probability (entry rate)/(envelope) using
    the kernel stored at the last trajectory time ``<= tau``.
    """
    if s > t:
        raise ValueError("need s <= t")
    if not f_traj.covers(s, t):
        raise ValueError(f"kernel trajectory covers [0, {f_traj.T}], not [{s}, {t}]")
    bp = boundary if boundary is not None else BoundaryProcess(H, f_traj)
    flow = _Flow.start(q, bp.D, bp.states, bp.index_of, s, log)
    env = bp.envelope
    if env > 0.0:
        tau = s
        while True:
            tau += rng.standard_exponential() / env
            if tau > t:
                break
            flow.run_until(tau)
            k = bp.time_index(tau)
            i = flow.idx[-1]
            if rng.random() * env < bp.rates[k][i]:
                flow.insert(bp.draw_target(k, i, rng.random()), tau)
    flow.run_until(t)
    return flow.configuration()
