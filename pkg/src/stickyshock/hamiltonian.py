"""Convex flux functions and their divided differences.

Shock speeds, collision rates and the boundary thinning envelope are all
expressed through first and second divided differences of the flux ``H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

CONVEXITY_TOL = 1e-9
CONFLUENT_GAP = 6e-6  # ~ eps ** (1/3)


@dataclass(frozen=True)
class Hamiltonian:
    """A smooth convex flux on ``[0, P]`` with derivative access.

    ``second_derivative`` is only needed for the fully confluent
    three-point divided difference; when absent a central difference of
    ``derivative`` is used. Built-in factories also supply exact divided
    differences ``dd2`` and ``dd3``.
    """

    evaluate: Callable[[float], float]
    derivative: Callable[[float], float]
    P: float
    second_derivative: Callable[[float], float] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    # Optional closed forms H[a, b] and H[a, b, c]; avoid cancellation for close points.
    dd2: Callable[[float, float], float] | None = field(default=None, compare=False, repr=False)
    dd3: Callable[[float, float, float], float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (self.P > 0 and math.isfinite(self.P)):
            raise ValueError(f"upper state bound P must be positive and finite, got {self.P}")

    def __call__(self, p: float) -> float:
        return self.evaluate(p)

    def dd(self, *points: float) -> float:
        return divided_difference(self, points)

    def describe(self) -> dict:
        return {"kind": self.name, "P": self.P, **self.params}

    def __reduce__(self):
        # Built-ins are rebuilt from their parameters so worker processes can receive them.
        if self.name == "quadratic":
            return quadratic, (self.P,)
        if self.name == "scaled_quadratic":
            return scaled_quadratic, (self.params["c"], self.P)
        if self.name == "polynomial":
            return polynomial, (self.params["coefficients"], self.P)
        raise TypeError("custom Hamiltonians built from arbitrary callables cannot be pickled")


def quadratic(P: float) -> Hamiltonian:
    """H(p) = p**2 / 2."""
    return Hamiltonian(
        evaluate=lambda p: 0.5 * p * p,
        derivative=lambda p: p,
        second_derivative=lambda p: 1.0,
        P=float(P),
        name="quadratic",
        dd2=lambda a, b: 0.5 * (a + b),
        dd3=lambda a, b, c: 0.5,
    )


def scaled_quadratic(c: float, P: float) -> Hamiltonian:
    """H(p) = c * p**2."""
    if c < 0:
        raise ValueError("scaled_quadratic needs c >= 0 to stay convex")
    c = float(c)
    return Hamiltonian(
        evaluate=lambda p: c * p * p,
        derivative=lambda p: 2.0 * c * p,
        second_derivative=lambda p: 2.0 * c,
        P=float(P),
        name="scaled_quadratic",
        params={"c": c},
        dd2=lambda a, b: c * (a + b),
        dd3=lambda a, b, c_: c,
    )


def polynomial(coefficients: Sequence[float], P: float) -> Hamiltonian:
    """H(p) = sum_k coefficients[k] * p**k (ascending powers)."""
    coeffs = np.polynomial.Polynomial([float(c) for c in coefficients])
    d1 = coeffs.deriv(1)
    d2 = coeffs.deriv(2)
    return Hamiltonian(
        evaluate=lambda p: float(coeffs(p)),
        derivative=lambda p: float(d1(p)),
        second_derivative=lambda p: float(d2(p)),
        P=float(P),
        name="polynomial",
        params={"coefficients": [float(c) for c in coefficients]},
        dd2=lambda a, b: _poly_dd(coeffs.coef, (a, b)),
        dd3=lambda a, b, c: _poly_dd(coeffs.coef, (a, b, c)),
    )


def _poly_dd(coef, pts) -> float:
    """Exact divided difference of a polynomial: sum_k c_k h_{k-m}(pts).

    ``h_j`` is the complete homogeneous symmetric polynomial of degree j in
    the ``m + 1`` points; every term is a product of the points, so there
    is no cancellation when points nearly coincide.
    """
    m = len(pts) - 1
    deg = len(coef) - 1
    if deg < m:
        return 0.0
    # h[j] over the points seen so far, extended one point at a time.
    h = [pts[0] ** j for j in range(deg - m + 1)]
    for x in pts[1:]:
        acc = 0.0
        new = []
        for j in range(deg - m + 1):
            acc = acc * x + h[j]
            new.append(acc)
        h = new
    return float(sum(coef[k] * h[k - m] for k in range(m, deg + 1)))


def _check_domain(H: Hamiltonian, p: float) -> None:
    if not (0.0 <= p <= H.P):
        raise ValueError(f"point {p} outside [0, {H.P}]")


def _second(H: Hamiltonian, p: float) -> float:
    if H.second_derivative is not None:
        return H.second_derivative(p)
    h = 1e-5 * max(H.P, 1.0)
    lo, hi = max(p - h, 0.0), min(p + h, H.P)
    return (H.derivative(hi) - H.derivative(lo)) / (hi - lo)


def _near(H: Hamiltonian, a: float, b: float) -> bool:
    # Below this gap the difference quotient loses more to cancellation than
    # the midpoint rule loses to truncation (O(gap^2)).
    return abs(b - a) <= CONFLUENT_GAP * max(H.P, 1.0)


def _first(H: Hamiltonian, a: float, b: float) -> float:
    if a == b:
        return H.derivative(a)
    if H.dd2 is not None:
        return H.dd2(a, b)
    if _near(H, a, b):
        return H.derivative(0.5 * (a + b))
    return (H.evaluate(b) - H.evaluate(a)) / (b - a)


def divided_difference(H: Hamiltonian, points: Sequence[float]) -> float:
    """Divided difference of ``H`` through one, two or three points.

    Repeated points use the confluent limit, so ``H[p, p] = H'(p)`` and
    ``H[p, p, p] = H''(p) / 2``. Arguments are sorted first, which makes
    the result exactly symmetric.
    """
    pts = [float(p) for p in points]
    if not pts:
        raise TypeError("divided_difference needs at least one point")
    if len(pts) > 3:
        raise TypeError("divided_difference supports at most three points")
    for p in pts:
        _check_domain(H, p)
    pts.sort()
    if len(pts) == 1:
        return H.evaluate(pts[0])
    if len(pts) == 2:
        return _first(H, pts[0], pts[1])
    a, b, c = pts
    if H.dd3 is not None:
        return H.dd3(a, b, c)
    if a == c or _near(H, a, c):
        return 0.5 * _second(H, 0.5 * (a + c))
    return (_first(H, b, c) - _first(H, a, b)) / (c - a)


def max_speed(H: Hamiltonian) -> float:
    """Upper bound H'(P) on every shock speed."""
    return H.derivative(H.P)


def dd_table(H: Hamiltonian, states: Sequence[float]) -> np.ndarray:
    """Matrix ``D[i, j] = H[v_i, v_j]`` over grid states (diagonal = H')."""
    v = np.asarray(states, dtype=float)
    n = len(v)
    D = np.empty((n, n))
    for i in range(n):
        D[i, i] = H.derivative(v[i])
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = _first(H, v[i], v[j])
    return D


@dataclass
class Violation:
    kind: str
    location: object
    value: float
    message: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self):
        if self.ok:
            return "valid"
        parts = []
        for kind in dict.fromkeys(v.kind for v in self.violations):
            hits = [v for v in self.violations if v.kind == kind]
            first = hits[0]
            more = f" (+{len(hits) - 1} more)" if len(hits) > 1 else ""
            parts.append(f"{kind} at {first.location}: {first.message or first.value}{more}")
        return "; ".join(parts)


def validate_hamiltonian(H: Hamiltonian, samples: int = 100, tol: float = CONVEXITY_TOL) -> ValidationReport:
    """Sampled check of convexity, H'(0) >= 0 and finiteness of H'(P).

    Raises ``FloatingPointError`` if ``H`` evaluates to a non-finite value
    on the sample; all other problems are collected in the report.
    """
    if samples < 3:
        raise ValueError("validate_hamiltonian needs at least 3 samples")
    grid = np.linspace(0.0, H.P, samples)
    values = [H.evaluate(p) for p in grid]
    if not all(math.isfinite(v) for v in values):
        raise FloatingPointError(f"{H.name} is not finite on [0, {H.P}]")
    report = ValidationReport()
    for k in range(samples - 2):
        second = divided_difference(H, grid[k : k + 3])
        if second < -tol:
            report.violations.append(
                Violation("convexity", float(grid[k + 1]), second, f"H[p1,p2,p3] = {second:.3g} < 0")
            )
    d0 = H.derivative(0.0)
    if d0 < -tol:
        report.violations.append(Violation("derivative_at_zero", 0.0, d0, f"H'(0) = {d0:.3g} < 0"))
    dP = H.derivative(H.P)
    if not math.isfinite(dP):
        report.violations.append(Violation("derivative_at_P", H.P, dP, "H'(P) is not finite"))
    return report
