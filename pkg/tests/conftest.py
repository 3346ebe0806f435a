import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stickyshock import StateGrid, quadratic, single_step

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def grid3():
    return StateGrid([0.0, 1.0, 2.0])


@pytest.fixture
def H2():
    return quadratic(2.0)


@pytest.fixture
def g3(grid3):
    """The 3-state example: 0 -> 1 -> 2 at rate 1, top self-rate 1."""
    return single_step(grid3, 1.0, 1.0)


def random_upper_kernel(rng: np.random.Generator, K: int, lam: float | None = 1.0, density: float = 0.7) -> np.ndarray:
    """Nonnegative upper-triangular (K+1)x(K+1) matrix; constant row sums ``lam`` unless ``lam`` is None."""
    n = K + 1
    F = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
    for i in range(K):
        if F[i].sum() == 0:
            F[i, rng.integers(i + 1, n)] = 1.0
    if lam is None:
        F[K, K] = rng.random()
        return F
    F[:K] = F[:K] / F[:K].sum(axis=1, keepdims=True) * lam
    F[K, K] = lam
    return F


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
