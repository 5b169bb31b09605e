"""SABR model parameters, admissible weight exponents, and form constants.

The pricing engine works on the log-volatility formulation of the SABR
dynamics

    dX = Y X^beta dW,   dY = nu Y dZ,   d<W,Z> = rho dt,

with absorption at X = 0.  Everything downstream (assembly, time stepping,
pricing) consumes the plain-number constants produced here: the admissible
range of the spatial weight exponent mu, the continuity/Garding constants of
the bilinear form, and the six coefficients of the stiffness operator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass


class ParameterError(ValueError):
    """A model or discretization parameter is outside its admissible range."""


@dataclass(frozen=True)
class SabrParams:
    """SABR parameter tuple (beta, rho, nu) plus the initial state (x0, y0).

    Field ranges are enforced on construction; the well-posedness condition
    |rho| * nu**2 < 2 is *not* enforced here so that rejected tuples can be
    represented and reported.  Call :func:`validate_params` before solving.
    """

    beta: float
    rho: float
    nu: float
    x0: float
    y0: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta={self.beta} outside [0, 1]")
        if not -1.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho={self.rho} outside [-1, 1]")
        if not self.nu >= 0.0:
            raise ParameterError(f"nu={self.nu} must be >= 0")
        if not self.x0 > 0.0:
            raise ParameterError(f"x0={self.x0} must be > 0")
        if not self.y0 > 0.0:
            raise ParameterError(f"y0={self.y0} must be > 0")


@dataclass(frozen=True)
class WellPosednessCert:
    """Constants certifying continuity and the Garding inequality.

    delta and epsilon are the auxiliary splitting constants; C1 bounds
    |a(u,v)| <= C1 ||u||_V ||v||_V, and a(u,u) >= C2 ||u||_V^2 - C3 ||u||_H^2.
    """

    delta: float
    epsilon: float
    C1: float
    C2: float
    C3: float


@dataclass(frozen=True)
class CoefficientSet:
    """Scalar coefficients of the six Kronecker terms of the stiffness operator."""

    Qxx: float
    Qxy: float
    Qyy: float
    cx1: float
    cx2: float
    cy: float


def validate_params(p: SabrParams) -> None:
    """Accept or reject a parameter tuple for solving.

    Field ranges are checked by the ``SabrParams`` constructor, so the only
    remaining gate is the well-posedness condition |rho| * nu**2 < 2 (strict).

    Raises
    ------
    ParameterError
        with the violated bound in the message.
    """
    gap = abs(p.rho) * p.nu**2
    if not gap < 2.0:
        raise ParameterError(
            f"well-posedness violated: |rho|*nu^2 = {gap:.6g} >= 2"
        )


def is_wellposed(p: SabrParams) -> bool:
    """Non-raising variant of :func:`validate_params`."""
    return abs(p.rho) * p.nu**2 < 2.0


def mu_range(beta: float) -> tuple[tuple[float, float], float]:
    """Admissible interval for the weight exponent mu, and the default choice.

    The weight x^mu must keep the degenerate form coercive-compatible:
    mu in [-2*beta, 0] for beta < 1/2, mu in [-1, 1-2*beta] for beta in
    [1/2, 1).  beta = 1 is the lognormal case and is pinned to the unweighted
    setting mu = 0.  The default is mu = -beta (0 for beta = 1).
    """
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta={beta} outside [0, 1]")
    if beta == 1.0:
        return (0.0, 0.0), 0.0
    if beta < 0.5:
        return (-2.0 * beta, 0.0), -beta
    return (-1.0, 1.0 - 2.0 * beta), -beta


def check_mu(beta: float, mu: float) -> None:
    """Raise unless mu lies in the admissible interval for beta."""
    (lo, hi), _ = mu_range(beta)
    if not lo <= mu <= hi:
        raise ParameterError(
            f"mu={mu} outside admissible interval [{lo}, {hi}] for beta={beta}"
        )


def default_mu(beta: float) -> float:
    """Default weight exponent -beta (0 for beta = 1)."""
    _, mu = mu_range(beta)
    return mu


def delta_interval(p: SabrParams) -> tuple[float, float]:
    """Open interval of admissible splitting constants delta.

    Nonempty exactly when |rho|*nu^2 < 2.  For rho*nu = 0 the constant is
    unconstrained and the returned interval is a conventional (0, inf) stand-in.
    """
    a = abs(p.rho) * p.nu
    if a == 0.0:
        return (0.0, math.inf)
    return (a * p.nu**2 / 2.0, 2.0 / a)


def wellposedness_constants(p: SabrParams, mu: float | None = None) -> WellPosednessCert:
    """Evaluate the continuity and Garding constants for an accepted tuple.

    delta is taken at the geometric midpoint of its admissible open interval
    (which works out to delta = nu), epsilon at half its upper bound
    2/(|rho| nu^3) - 1/delta.  With those choices

        C2 = min(nu^2/2 - |rho| nu^3 delta / 4,
                 1/2 - |rho| nu^3 / (4 delta) - |rho| nu^3 epsilon / 4) > 0,
        C3 = C2 + |rho| nu^3 / (4 epsilon),

    and C1 is the sum of the six term-wise continuity coefficients

        C1 = 1/2 + (2 beta + mu)/|2 beta + mu - 1| + 2 |rho nu| max(1, nu^2/2) + nu^2.

    The nu = 0 reduction has no y-coupled terms; the certificate degenerates to
    (C2, C3) = (1/2, 1/2) with unconstrained positive delta, epsilon.
    """
    validate_params(p)
    if mu is None:
        _, mu = mu_range(p.beta)
    else:
        check_mu(p.beta, mu)

    # Hardy constant blows up at 2*beta + mu = 1; nudge mu off the degeneracy.
    if abs(2.0 * p.beta + mu - 1.0) < 1e-12:
        warnings.warn(
            "2*beta + mu = 1 makes the Hardy constant singular; "
            "perturbing mu by -1e-6",
            RuntimeWarning,
            stacklevel=2,
        )
        mu -= 1e-6

    rn = abs(p.rho) * p.nu
    c1 = (
        0.5
        + (2.0 * p.beta + mu) / abs(2.0 * p.beta + mu - 1.0)
        + 2.0 * rn * max(1.0, p.nu**2 / 2.0)
        + p.nu**2
    )

    if rn == 0.0:
        delta = p.nu if p.nu > 0.0 else 1.0
        epsilon = 1.0
        c2 = min(p.nu**2 / 2.0, 0.5) if p.nu > 0.0 else 0.5
        return WellPosednessCert(delta=delta, epsilon=epsilon, C1=c1, C2=c2, C3=c2)

    lo, hi = delta_interval(p)
    delta = math.sqrt(lo * hi)  # == nu
    epsilon = 0.5 * (2.0 / (rn * p.nu**2) - 1.0 / delta)
    if epsilon <= 0.0:
        raise ParameterError(
            f"no admissible epsilon: |rho|*nu^2 = {rn * p.nu:.6g} too close to 2"
        )
    rn3 = rn * p.nu**2  # |rho| nu^3
    c2 = min(
        p.nu**2 / 2.0 - rn3 * delta / 4.0,
        0.5 - rn3 / (4.0 * delta) - rn3 * epsilon / 4.0,
    )
    c3 = c2 + rn3 / (4.0 * epsilon)
    return WellPosednessCert(delta=delta, epsilon=epsilon, C1=c1, C2=c2, C3=c3)


def operator_coefficients(p: SabrParams, mu: float) -> CoefficientSet:
    """Coefficients of the six Kronecker terms of the stiffness matrix.

    (Qxx, Qxy, Qyy) multiply the second-order blocks, (cx1, cx2, cy) the
    first-order ones.  nu = 0 zeroes every y-coupled coefficient, which is the
    CEV reduction.
    """
    check_mu(p.beta, mu)
    return CoefficientSet(
        Qxx=0.5,
        Qxy=p.rho * p.nu,
        Qyy=p.nu**2 / 2.0,
        cx1=(2.0 * p.beta + mu) / 2.0,
        cx2=p.rho * p.nu,
        cy=p.nu**2 / 2.0,
    )
