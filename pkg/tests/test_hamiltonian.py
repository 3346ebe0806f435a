import math
import pickle

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stickyshock.hamiltonian import (
    Hamiltonian,
    dd_table,
    divided_difference,
    max_speed,
    polynomial,
    quadratic,
    scaled_quadratic,
    validate_hamiltonian,
)

unit = st.floats(0.0, 1.0, allow_nan=False)
coeffs = st.lists(st.floats(0.0, 3.0, allow_nan=False), min_size=3, max_size=5)


def test_divided_difference_examples():
    H = quadratic(4.0)
    assert divided_difference(H, [1, 3]) == 2.0
    assert divided_difference(H, [0, 1, 2]) == 0.5
    assert divided_difference(H, [1, 1]) == 1.0


def test_confluent_three_point_is_half_second_derivative():
    H = polynomial([0, 0, 0, 1], 2.0)  # p^3
    assert divided_difference(H, [1.5, 1.5, 1.5]) == pytest.approx(0.5 * 6 * 1.5)
    assert divided_difference(H, [0.5]) == pytest.approx(0.125)


def test_divided_difference_errors():
    H = quadratic(1.0)
    with pytest.raises(TypeError):
        divided_difference(H, [])
    with pytest.raises(TypeError):
        divided_difference(H, [0, 0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        divided_difference(H, [0.5, 1.5])


@pytest.mark.parametrize(
    "H, expected",
    [(quadratic(1.0), 1.0), (quadratic(2.0), 2.0), (polynomial([0, 0, 0, 0, 1], 1.0), 4.0)],
)
def test_max_speed(H, expected):
    assert max_speed(H) == expected


def test_validate_hamiltonian_examples():
    assert validate_hamiltonian(quadratic(1.0), 100).ok
    concave = polynomial([0, 0, -1], 1.0)
    assert "convexity" in validate_hamiltonian(concave, 100).kinds()
    decreasing = polynomial([0, -1], 1.0)
    rep = validate_hamiltonian(decreasing, 100)
    assert rep.kinds() == {"derivative_at_zero"}
    assert rep.violations[0].location == 0.0


def test_validate_hamiltonian_non_finite():
    H = Hamiltonian(lambda p: 1.0 / (1.0 - p) if p < 1 else math.inf, lambda p: 0.0, 1.0)
    with pytest.raises(FloatingPointError):
        validate_hamiltonian(H)


def test_dd_table_diagonal_is_derivative():
    H = quadratic(2.0)
    D = dd_table(H, [0.0, 1.0, 2.0])
    assert D.tolist() == [[0.0, 0.5, 1.0], [0.5, 1.0, 1.5], [1.0, 1.5, 2.0]]


def test_builtins_pickle_round_trip():
    for H in (quadratic(2.0), scaled_quadratic(0.5, 1.0), polynomial([0, 1, 2], 3.0)):
        H2 = pickle.loads(pickle.dumps(H))
        assert H2.dd(0.3, 0.7) == H.dd(0.3, 0.7)
        assert H2.describe() == H.describe()


@given(coeffs, unit, unit)
def test_two_point_symmetry(c, a, b):
    H = polynomial(c, 1.0)
    assert abs(divided_difference(H, [a, b]) - divided_difference(H, [b, a])) <= 1e-12


@given(coeffs, unit, unit, unit, st.permutations(range(3)))
def test_three_point_permutation_invariance(c, a, b, d, perm):
    H = polynomial(c, 1.0)
    pts = [a, b, d]
    assert abs(divided_difference(H, pts) - divided_difference(H, [pts[i] for i in perm])) <= 1e-12


@given(coeffs, st.lists(unit, min_size=3, max_size=3, unique=True))
def test_recurrence(c, pts):
    H = polynomial(c, 1.0)
    p1, p2, p3 = sorted(pts)
    lhs = divided_difference(H, [p1, p2, p3]) * (p3 - p1)
    rhs = divided_difference(H, [p2, p3]) - divided_difference(H, [p1, p2])
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


@given(coeffs, unit, unit)
def test_convexity_squeeze(c, a, b):
    H = polynomial(c, 1.0)
    v = divided_difference(H, [a, b])
    assert H.derivative(0.0) - 1e-12 <= v <= max_speed(H) + 1e-12
