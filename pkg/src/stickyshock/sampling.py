"""Initial paths, candidate configurations and per-path random streams."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .particles import Configuration
from .state_space import MarginalMeasure, RateKernel

# Stream tags: each path index owns one substream per role.
INITIAL = 0
BOUNDARY = 1
CANDIDATE = 2
BOUNDARY_ALT = 3


@dataclass(frozen=True)
class RandomStreamPolicy:
    """Substream ``(tag, path)`` of a master seed, independent of scheduling.

    Streams come from ``SeedSequence(master_seed, spawn_key=(tag, path))``
    feeding PCG64, so any path can be regenerated in isolation and the
    number of addressable substreams is unbounded.
    """

    master_seed: int

    def generator(self, path: int, tag: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(int(tag), int(path)))
        return np.random.Generator(np.random.PCG64(ss))


def _cdf_rows(rates: np.ndarray, lam: float) -> list[list[float]]:
    rows = np.cumsum(np.asarray(rates, dtype=float), axis=1)
    out = []
    for i, row in enumerate(rows):
        total = row[-1]
        out.append((row / total).tolist() if total > 0 else [])
    return out


class ChainSampler:
    """Precomputed categorical tables for drawing value chains from a kernel."""

    def __init__(self, f: RateKernel, lam: float):
        self.states = [float(s) for s in f.grid.states]
        self.lam = float(lam)
        self.cdf = _cdf_rows(f.rates, lam)

    def step(self, i: int, u: float) -> int:
        row = self.cdf[i]
        if not row:
            raise RuntimeError(f"no jump possible out of state {self.states[i]} (zero kernel row)")
        return min(bisect_right(row, u), len(row) - 1)


def _lam_of(g: RateKernel) -> float:
    return float(g.rates.sum(axis=1).max())


def sample_initial_path(
    g: RateKernel, lam: float, L: float, rng: np.random.Generator, *, sampler: ChainSampler | None = None
) -> Configuration:
    """Pure-jump chain from 0 with Exponential(lam) gaps, cut at ``x = L``."""
    if not L > 0:
        raise ValueError("L must be positive")
    cs = sampler or ChainSampler(g, lam)
    states = cs.states
    idx = 0
    positions: list[float] = []
    values = [states[0]]
    if lam > 0:
        x = rng.standard_exponential() / lam
        while x <= L:
            idx = cs.step(idx, rng.random())
            positions.append(x)
            values.append(states[idx])
            x += rng.standard_exponential() / lam
    return Configuration(tuple(positions), tuple(values), L)


def sample_candidate(
    ell: MarginalMeasure,
    f: RateKernel,
    lam: float,
    L: float,
    rng: np.random.Generator,
    *,
    sampler: ChainSampler | None = None,
    start_cdf: list[float] | None = None,
) -> Configuration:
    """Draw from the product-form candidate law at one time.

    Poisson(lam L) shock count, sorted uniform positions on (0, L), value
    chain started from ``ell`` with transitions ``f / lam``.
    """
    cs = sampler or ChainSampler(f, lam)
    if start_cdf is None:
        start_cdf = (np.cumsum(ell.weights) / ell.weights.sum()).tolist()
    N = int(rng.poisson(lam * L)) if lam > 0 else 0
    positions = np.sort(L * (1.0 - rng.random(N))) if N else ()
    idx = min(bisect_right(start_cdf, rng.random()), len(start_cdf) - 1)
    values = [cs.states[idx]]
    for _ in range(N):
        idx = cs.step(idx, rng.random())
        values.append(cs.states[idx])
    return Configuration(tuple(float(x) for x in positions), tuple(values), L)
