import numpy as np
import pytest

from stickyshock.experiments import (
    CHUNK,
    burgers_closure_check,
    restrict,
    step_function_on,
    verify_coupling,
    verify_lstar,
    verify_propagation,
)
from stickyshock.hamiltonian import quadratic
from stickyshock.kinetic import SolverScheme
from stickyshock.particles import Configuration
from stickyshock.state_space import StateGrid, single_step

FAST = SolverScheme("rk4", 1e-3)


@pytest.fixture
def unit_setup():
    grid = StateGrid([0.0, 0.5, 1.0])
    return single_step(grid, 0.5, 1.0), quadratic(1.0)


def test_propagation_zero_rate(grid3, H2):
    g = single_step(grid3, 1.0, 0.0)
    rep = verify_propagation(g, H2, 0.0, 5.0, 1.0, 200, seed=1, scheme=FAST)
    assert rep.passed
    zs = [s.score for s in rep.statistics if s.score_kind == "z"]
    assert len(zs) == 10 and all(z == 0.0 for z in zs)


def test_propagation_time_zero(g3, H2):
    rep = verify_propagation(g3, H2, 1.0, 5.0, 0.0, 2000, seed=2)
    assert rep.passed
    assert rep.parameters["T"] == 0.0


def test_propagation_small_run(g3, H2):
    rep = verify_propagation(g3, H2, 1.0, 5.0, 1.0, 3000, seed=4, scheme=FAST)
    assert rep.passed, rep.summary()
    hist = [s for s in rep.statistics if s.score_kind == "histogram"]
    assert len(hist) == 3 and sum(s.estimate for s in hist) == pytest.approx(1.0)


def test_restrict_and_step_function():
    q = Configuration((1.0, 4.0, 7.0), (0.0, 1.0, 1.5, 2.0), 10.0)
    r = restrict(q, 5.0)
    assert r.positions == (1.0, 4.0) and r.values == (0.0, 1.0, 1.5) and r.L == 5.0
    assert step_function_on(q, 4.0) == step_function_on(r, 4.0)
    assert step_function_on(q, 8.0) != step_function_on(r, 5.0)


def test_coupling_time_zero(unit_setup):
    g, H = unit_setup
    rep = verify_coupling(g, H, 1.0, 5.0, 10.0, 0.0, 300, seed=1)
    assert rep.passed and rep.parameters["agreement_window"] == 5.0


def test_coupling_zero_rate():
    grid = StateGrid([0.0, 0.5, 1.0])
    rep = verify_coupling(single_step(grid, 0.5, 0.0), quadratic(1.0), 0.0, 5.0, 10.0, 1.0, 300)
    assert rep.passed


def test_coupling_small_run(unit_setup):
    g, H = unit_setup
    rep = verify_coupling(g, H, 1.0, 5.0, 10.0, 1.0, 500, seed=3, scheme=FAST)
    assert rep.passed and rep.statistics[0].estimate == 0


def test_coupling_argument_checks(unit_setup):
    g, H = unit_setup
    with pytest.raises(ValueError):
        verify_coupling(g, H, 1.0, 5.0, 5.0, 1.0, 10)
    with pytest.raises(ValueError):
        verify_coupling(g, H, 1.0, 5.0, 10.0, 6.0, 10)


def test_lstar_example(g3, H2):
    rep = verify_lstar(g3, H2, 1.0, 0.5, [(0, 1)], 0.02, probe_times=(0.0,))
    fd = [s for s in rep.statistics if s.name.startswith("chain=(0, 1),t=0.0,")]
    assert fd[0].reference == pytest.approx(-1.5)
    assert fd[0].estimate == pytest.approx(-1.5, abs=0.1)
    assert rep.passed


def test_lstar_first_order(g3, H2):
    chains = [(0,), (0, 1), (0, 2), (0, 1, 2), (1, 2), (0, 1, 2, 2)]
    rep = verify_lstar(g3, H2, 1.0, 0.5, chains, 0.02)
    ratio = next(s for s in rep.statistics if s.name == "error_ratio")
    assert rep.passed and 1.4 <= ratio.estimate <= 2.6


def test_burgers_initial_residuals():
    rep = burgers_closure_check(t_max=0.05, K=20, P=20.0)
    stats = {s.name: s for s in rep.statistics}
    assert stats["initial_exponent_residual"].estimate == 0.0
    assert stats["orientation_sign"].estimate in (1.0, -1.0)


def test_burgers_default_passes():
    rep = burgers_closure_check()
    assert rep.passed, rep.summary()


def _fp(rep):
    return rep.fingerprint()


def test_worker_count_does_not_change_results(g3, H2):
    M = CHUNK + 300
    a = verify_propagation(g3, H2, 1.0, 5.0, 0.5, M, seed=7, workers=1, scheme=FAST)
    b = verify_propagation(g3, H2, 1.0, 5.0, 0.5, M, seed=7, workers=2, scheme=FAST)
    assert _fp(a) == _fp(b)
    c = verify_propagation(g3, H2, 1.0, 5.0, 0.5, M, seed=8, workers=1, scheme=FAST)
    assert _fp(a) != _fp(c)
