import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats as sps

from stickyshock.sampling import (
    BOUNDARY,
    CANDIDATE,
    INITIAL,
    ChainSampler,
    RandomStreamPolicy,
    sample_candidate,
    sample_initial_path,
)
from stickyshock.state_space import MarginalMeasure, StateGrid, single_step, uniform_up

M = 100_000


@pytest.fixture(scope="module")
def initial_paths():
    grid = StateGrid([0.0, 1.0, 2.0])
    g = uniform_up(grid, 1.0)
    sampler = ChainSampler(g, 1.0)
    policy = RandomStreamPolicy(11)
    return g, [sample_initial_path(g, 1.0, 2.0, policy.generator(i, INITIAL), sampler=sampler) for i in range(M)]


def test_zero_jump_probability(initial_paths):
    _, paths = initial_paths
    p = math.exp(-2.0)
    freq = sum(q.n == 0 for q in paths) / M
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / M)


def test_mean_jump_count(initial_paths):
    _, paths = initial_paths
    n = np.array([q.n for q in paths], dtype=float)
    assert abs(n.mean() - 2.0) <= 3 * n.std(ddof=1) / math.sqrt(M)


def test_deterministic_chain_for_single_target():
    grid = StateGrid.uniform(4, 4.0)
    g = single_step(grid, 1.0, 1.0)
    policy = RandomStreamPolicy(0)
    for i in range(200):
        q = sample_initial_path(g, 1.0, 3.0, policy.generator(i))
        expected = [min(float(k), 4.0) for k in range(q.n + 1)]
        assert list(q.values) == expected


def test_zero_rate_gives_flat_path(grid3):
    g = single_step(grid3, 1.0, 0.0)
    q = sample_initial_path(g, 0.0, 5.0, np.random.default_rng(0))
    assert q.n == 0 and q.values == (0.0,)


def test_candidate_without_jumps(grid3, g3):
    ell = MarginalMeasure(grid3, np.array([0.2, 0.3, 0.5]))
    q = sample_candidate(ell, g3, 0.0, 5.0, np.random.default_rng(1))
    assert q.n == 0 and q.values[0] in (0.0, 1.0, 2.0)


def test_candidate_positions_uniform(grid3, g3):
    ell = MarginalMeasure.delta(grid3)
    policy = RandomStreamPolicy(5)
    L, lam = 4.0, 0.25  # P(N = 1) = e^{-1}
    xs = []
    for i in range(20_000):
        q = sample_candidate(ell, g3, lam, L, policy.generator(i, CANDIDATE))
        if q.n == 1:
            xs.append(q.positions[0])
    xs = np.array(xs)
    assert abs(xs.mean() - L / 2) <= 3 * xs.std(ddof=1) / math.sqrt(len(xs))


def _chain_key(q):
    return (min(q.n, 4), q.values[-1])


def test_candidate_at_time_zero_matches_initial_law(initial_paths):
    g, paths = initial_paths
    sampler = ChainSampler(g, 1.0)
    ell = MarginalMeasure.delta(g.grid)
    policy = RandomStreamPolicy(12)
    cands = [sample_candidate(ell, g, 1.0, 2.0, policy.generator(i, CANDIDATE), sampler=sampler) for i in range(M)]
    a = [q.positions[0] for q in paths if q.n]
    b = [q.positions[0] for q in cands if q.n]
    assert sps.ks_2samp(a, b).pvalue > 1e-3
    ka, kb = Counter(map(_chain_key, paths)), Counter(map(_chain_key, cands))
    keys = sorted(set(ka) | set(kb))
    table = np.array([[ka[k] for k in keys], [kb[k] for k in keys]])
    assert sps.chi2_contingency(table)[1] > 1e-3
    assert all(q.values[0] == 0.0 for q in cands)


def test_stream_policy_is_addressable():
    p = RandomStreamPolicy(7)
    a = p.generator(3, INITIAL).random(4)
    assert np.array_equal(a, RandomStreamPolicy(7).generator(3, INITIAL).random(4))
    assert not np.array_equal(a, p.generator(3, BOUNDARY).random(4))
    assert not np.array_equal(a, p.generator(4, INITIAL).random(4))
    assert not np.array_equal(a, RandomStreamPolicy(8).generator(3, INITIAL).random(4))
    big = p.generator(2**64 + 5, INITIAL).random()
    assert 0.0 <= big < 1.0


def test_path_sets_reproducible(g3):
    policy = RandomStreamPolicy(99)
    run = lambda: [sample_initial_path(g3, 1.0, 5.0, policy.generator(i)) for i in range(500)]
    assert run() == run()
