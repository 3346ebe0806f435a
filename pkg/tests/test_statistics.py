import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stickyshock.particles import Configuration
from stickyshock.sampling import sample_initial_path
from stickyshock.statistics import (
    DEFAULT_TEST_FUNCTIONS,
    ExperimentReport,
    Statistic,
    TestFunction,
    chi_square_against,
    estimate_mean,
    evaluate_solution,
    laplace_functional,
    laplace_functionals,
    mean_and_stderr,
    path_measure,
    two_sample_z,
)

Q = Configuration((1.0, 2.0), (0.0, 1.0, 3.0), 5.0)


def test_path_measure_examples():
    assert path_measure(Q) == [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]
    assert path_measure(Configuration((), (0.5,), 1.0)) == [(0.0, 0.5)]


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, 0.0), (2.0, 3.0), (0.0, 0.0), (5.0, 3.0)])
def test_evaluate_solution(x, expected):
    assert evaluate_solution(Q, x) == expected


def test_evaluate_solution_domain():
    with pytest.raises(ValueError):
        evaluate_solution(Q, 5.5)


def test_laplace_examples():
    assert laplace_functional(Q, TestFunction(0.0, 0.0, 0.0)) == 1.0
    assert laplace_functional(Configuration((), (0.3,), 1.0), TestFunction(0.0, 0.0, 1.0)) == pytest.approx(
        0.740818, abs=1e-6
    )
    q = Configuration((1.0,), (0.0, 1.0), 2.0)
    assert laplace_functional(q, TestFunction(1.0, 1.0)) == pytest.approx(0.692201, abs=1e-6)
    assert laplace_functionals(q, DEFAULT_TEST_FUNCTIONS)[3] == laplace_functional(q, TestFunction(1.0, 1.0))


def test_test_function_rejects_negative():
    with pytest.raises(ValueError):
        TestFunction(-1.0, 1.0)
    assert len(DEFAULT_TEST_FUNCTIONS) == 10


def _random_config(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 6))
    xs = np.sort(rng.uniform(0.01, 5.0, n))
    xs = np.unique(xs)
    r = np.cumsum(np.concatenate([[rng.uniform(0, 1)], rng.uniform(0, 1, len(xs))]))
    return Configuration(tuple(xs), tuple(r), 5.0)


@given(st.integers(0, 10**6))
def test_path_measure_total_mass(seed):
    q = _random_config(seed)
    assert sum(m for _, m in path_measure(q)) == pytest.approx(q.values[-1], abs=1e-12)


@given(st.integers(0, 10**6), st.floats(0.0, 5.0))
def test_observables_consistent(seed, x):
    q = _random_config(seed)
    atoms = path_measure(q)
    direct = atoms[0][1] + sum(m for pos, m in atoms[1:] if 0 < pos <= x)
    assert evaluate_solution(q, x) == pytest.approx(direct, abs=1e-12)


params = st.floats(0.0, 3.0, allow_nan=False)


@given(st.integers(0, 10**6), params, params, params, params, params, params)
def test_laplace_monotone_in_J(seed, a, b, c, da, db, dc):
    q = _random_config(seed)
    small = TestFunction(a, b + db, c)
    big = TestFunction(a + da, b, c + dc)  # pointwise >= small
    lo, hi = laplace_functional(q, big), laplace_functional(q, small)
    assert 0.0 < hi <= 1.0 and 0.0 <= lo <= hi


def test_estimate_mean_constant():
    assert estimate_mean(lambda rng: 3.5, 100, 0) == (3.5, 0.0)


def test_estimate_mean_indicator(g3):
    p = math.exp(-2.0)
    indicator = lambda rng: float(sample_initial_path(g3, 1.0, 2.0, rng).n == 0)
    m, s = estimate_mean(indicator, 100_000, 1)
    assert abs(m - p) <= 4 * s


def test_stderr_scaling():
    f = lambda rng: rng.standard_normal()
    _, s1 = estimate_mean(f, 10_000, 3)
    _, s4 = estimate_mean(f, 40_000, 4)
    assert s1 / s4 == pytest.approx(2.0, rel=0.2)


def test_mean_and_stderr_needs_two():
    with pytest.raises(ValueError):
        mean_and_stderr([1.0])


def test_two_sample_z():
    assert two_sample_z(1.0, 0.0, 1.0, 0.0) == 0.0
    assert two_sample_z(2.0, 0.0, 1.0, 0.0) == math.inf
    assert two_sample_z(1.0, 0.3, 0.0, 0.4) == pytest.approx(2.0)


def test_chi_square_against():
    stat, p, dof = chi_square_against([50, 50], [0.5, 0.5])
    assert stat == 0.0 and p == 1.0 and dof == 1
    assert chi_square_against([10, 0, 5], [0.5, 0.0, 0.5])[1] > 0
    assert chi_square_against([10, 1, 5], [0.5, 0.0, 0.5])[1] == 0.0
    # tiny expected bins are pooled
    _, _, dof = chi_square_against([980, 18, 2, 0], [0.98, 0.018, 0.001, 0.001])
    assert dof == 2


def test_report_round_trip_and_fingerprint():
    r = ExperimentReport("x", {"a": 1}, [Statistic("s", 1.0, passed=True)], seed=3, M=10, wall_time=1.0)
    again = ExperimentReport.from_dict(r.to_dict())
    assert again == r
    later = ExperimentReport.from_dict({**r.to_dict(), "wall_time": 9.0})
    assert later.fingerprint() == r.fingerprint()
    assert ExperimentReport("x", {"a": 2}).fingerprint() != ExperimentReport("x", {"a": 1}).fingerprint()
    assert r.schema_version == 1
