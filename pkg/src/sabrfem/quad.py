"""Exact and high-order quadrature kernels for weighted cell integrals.

Hat-function integrands are polynomials of degree <= 2 per cell, so integrals
against the power weight x^a and the exponential weight e^{c y} have closed
forms.  The power rule handles the singular first cell (a in (-1, 0)) exactly
by integrating each monomial; general integrands against x^a on a cell
touching zero use Gauss-Jacobi nodes so the monomial weight is factored out
exactly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


class SingularIntegralError(ArithmeticError):
    """A weighted integral diverges on a cell touching x = 0."""


def power_poly_moment(x0: float, x1: float, a: float, coeffs) -> float:
    """Exact integral of x^a * sum_k coeffs[k] x^k over [x0, x1].

    Requires 0 <= x0 < x1.  On a cell with x0 = 0, every monomial with a
    nonzero coefficient must satisfy a + k > -1, else the integral diverges.
    """
    total = 0.0
    for k, c in enumerate(coeffs):
        if c == 0.0:
            continue
        e = a + k + 1.0
        if x0 == 0.0:
            if e <= 0.0:
                raise SingularIntegralError(
                    f"integral of x^{a + k} diverges on cell [0, {x1}]"
                )
            total += c * x1**e / e
        elif e == 0.0:
            total += c * (math.log(x1) - math.log(x0))
        else:
            total += c * (x1**e - x0**e) / e
    return total


def _hat_poly(x0: float, x1: float, side: int, deriv: int):
    """Monomial coefficients of the local hat shape (or its derivative).

    side 0 is the shape equal to 1 at x0, side 1 the one equal to 1 at x1.
    """
    h = x1 - x0
    if deriv:
        return (-1.0 / h,) if side == 0 else (1.0 / h,)
    if side == 0:
        return (x1 / h, -1.0 / h)
    return (-x0 / h, 1.0 / h)


def _poly_mul(p, q):
    out = [0.0] * (len(p) + len(q) - 1)
    for i, pi in enumerate(p):
        for j, qj in enumerate(q):
            out[i + j] += pi * qj
    return out


def weighted_moment(
    x0: float,
    x1: float,
    a: float,
    trial_side: int,
    test_side: int,
    trial_deriv: int = 0,
    test_deriv: int = 0,
) -> float:
    """Exact ∫ x^a * D^{trial_deriv} b_trial * D^{test_deriv} b_test over a cell.

    b_0 rises toward x0, b_1 toward x1 (local hat shapes); the integrand is
    x^a times a polynomial of degree <= 2, integrated by the closed monomial
    rule.  Raises ``SingularIntegralError`` when the combined exponent makes
    the first-cell integral divergent.
    """
    p = _hat_poly(x0, x1, trial_side, trial_deriv)
    q = _hat_poly(x0, x1, test_side, test_deriv)
    return power_poly_moment(x0, x1, a, _poly_mul(p, q))


# ---------------------------------------------------------------------------
# exponential weight e^{c y}: closed-form moments of local polynomials
# ---------------------------------------------------------------------------

def _mk(z: float, k: int) -> float:
    """m_k(z) = ∫_0^1 e^{z t} t^k dt, stable for small z via the series."""
    if abs(z) < 1.0:
        # sum_m z^m / (m! (m+k+1)); converges rapidly for |z| < 1
        term = 1.0
        total = 1.0 / (k + 1)
        for m in range(1, 30):
            term *= z / m
            total += term / (m + k + 1)
            if abs(term) < 1e-18:
                break
        return total
    ez = math.exp(z)
    if k == 0:
        return (ez - 1.0) / z
    if k == 1:
        return (ez * (z - 1.0) + 1.0) / z**2
    if k == 2:
        return (ez * (z * z - 2.0 * z + 2.0) - 2.0) / z**3
    raise ValueError(f"unsupported moment order {k}")


def exp_weighted_moment(
    y0: float,
    y1: float,
    c: float,
    trial_side: int,
    test_side: int,
    trial_deriv: int = 0,
    test_deriv: int = 0,
) -> float:
    """Exact ∫ e^{c y} * D^{trial_deriv} b_trial * D^{test_deriv} b_test over a cell.

    Written in the local coordinate t = (y - y0)/h the shapes are 1-t and t,
    so the integrand is e^{c y} times a quadratic in t with closed-form
    moments.
    """
    h = y1 - y0

    def local(side, deriv):
        if deriv:
            return (-1.0 / h,) if side == 0 else (1.0 / h,)
        return (1.0, -1.0) if side == 0 else (0.0, 1.0)

    poly = _poly_mul(local(trial_side, trial_deriv), local(test_side, test_deriv))
    z = c * h
    scale = h * math.exp(c * y0)
    return scale * sum(ck * _mk(z, k) for k, ck in enumerate(poly) if ck != 0.0)


# ---------------------------------------------------------------------------
# panel quadrature for general integrands against x^a
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _legendre(n: int):
    x, w = roots_legendre(n)
    return x, w


@lru_cache(maxsize=64)
def _jacobi(n: int, a: float):
    # weight (1+t)^a on [-1, 1]
    x, w = roots_jacobi(n, 0.0, a)
    return x, w


def integrate_power_weighted(f, x0: float, x1: float, a: float, order: int = 8) -> float:
    """∫_{x0}^{x1} f(x) x^a dx by Gauss rules of the given order.

    On a cell touching x = 0 the monomial weight is factored out exactly with
    Gauss-Jacobi nodes (requires a > -1); elsewhere plain Gauss-Legendre is
    applied to f(x) x^a.
    """
    h = x1 - x0
    if x0 == 0.0 and a != 0.0:
        if a <= -1.0:
            raise SingularIntegralError(f"x^{a} not integrable at 0")
        t, w = _jacobi(order, a)
        xs = 0.5 * h * (t + 1.0)
        return (0.5 * h) ** (a + 1.0) * float(np.dot(w, f(xs)))
    t, w = _legendre(order)
    xs = x0 + 0.5 * h * (t + 1.0)
    vals = f(xs) * xs**a if a != 0.0 else f(xs)
    return 0.5 * h * float(np.dot(w, vals))
