"""Option-pricing front end: payoffs, initial projection, and solve pipelines.

A pricing request assembles the tensor operators on the truncated domain,
projects the payoff (a function of the forward only, extended constantly in
log-vol) onto the discrete space in the weighted inner product, runs the
theta scheme over time-to-maturity, and evaluates the final surface.  The
truncated problem is exactly an up-and-out barrier price at x = R_x; the
lower boundary x = 0 is never truncated and its node is free by default so
absorbed value is carried.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import mesh as msh
from .assembly import DiscretizationSpec, assemble_operators
from .model import ParameterError, SabrParams, check_mu, default_mu, validate_params
from .quad import integrate_power_weighted
from .stepping import ThetaConfig, build_stepper, run_theta_scheme

PAYOFF_KINDS = ("call", "put", "mass_zero_put", "identity", "custom")


@dataclass(frozen=True)
class Payoff:
    """Tagged payoff description; a function of the forward x only."""

    kind: str
    strike: float | None = None
    eps: float | None = None
    fn: object = None

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ParameterError(f"unknown payoff kind {self.kind!r}")
        if self.kind in ("call", "put") and (self.strike is None or self.strike <= 0):
            raise ParameterError(f"{self.kind} payoff needs a positive strike")
        if self.kind == "mass_zero_put" and (self.eps is None or self.eps <= 0):
            raise ParameterError("mass_zero_put payoff needs a positive eps")
        if self.kind == "custom" and not callable(self.fn):
            raise ParameterError("custom payoff needs a callable")

    @classmethod
    def call(cls, strike: float) -> "Payoff":
        return cls("call", strike=strike)

    @classmethod
    def put(cls, strike: float) -> "Payoff":
        return cls("put", strike=strike)

    @classmethod
    def mass_zero_put(cls, eps: float) -> "Payoff":
        """max(1 - x/eps, 0): indicator-of-absorption approximation."""
        return cls("mass_zero_put", eps=eps)

    @classmethod
    def identity(cls) -> "Payoff":
        return cls("identity")

    @classmethod
    def custom(cls, fn) -> "Payoff":
        return cls("custom", fn=fn)

    def sample(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "call":
            return np.maximum(x - self.strike, 0.0)
        if self.kind == "put":
            return np.maximum(self.strike - x, 0.0)
        if self.kind == "mass_zero_put":
            return np.maximum(1.0 - x / self.eps, 0.0)
        if self.kind == "identity":
            return x
        return np.asarray(self.fn(x), dtype=float)

    def __str__(self):
        if self.kind in ("call", "put"):
            return f"{self.kind}(K={self.strike:g})"
        if self.kind == "mass_zero_put":
            return f"mass_zero_put(eps={self.eps:g})"
        return self.kind


def default_spec(
    p: SabrParams,
    payoff: Payoff,
    T: float,
    L_x: int = 6,
    L_y: int = 6,
    mu: float | None = None,
    bc_x0: str = msh.FREE,
) -> DiscretizationSpec:
    """Reasonable truncated domain for a pricing request.

    R_x = max(4 * max(x0, strike-scale), 4).  The log-vol interval tracks the
    drifted process ln Y = ln y0 + nu Z_t - nu^2 t / 2: it extends
    nu^2 T/2 + 3.5 nu sqrt(T) below ln y0 but only 2.5 nu sqrt(T) above
    (upward excursions are rarer and e^{2y} weights explode), plus slack.
    """
    scale = p.x0
    if payoff.kind in ("call", "put"):
        scale = max(scale, payoff.strike)
    r_x = max(4.0 * scale, 4.0)
    ln_y0 = math.log(p.y0)
    if p.nu > 0.0:
        span = p.nu * math.sqrt(T)
        y_lo = ln_y0 - 0.5 * p.nu**2 * T - 3.5 * span - 0.5
        y_hi = ln_y0 + 2.5 * span + 0.5
    else:
        y_lo, y_hi = ln_y0 - 1.0, ln_y0 + 1.0
    if mu is None:
        mu = default_mu(p.beta)
    return DiscretizationSpec(
        R_x=r_x,
        R_y=0.5 * (y_hi - y_lo),
        L_x=L_x,
        L_y=L_y,
        mu=mu,
        bc_x0=bc_x0,
        y_center=0.5 * (y_hi + y_lo),
    )


def project_payoff(payoff: Payoff, spec: DiscretizationSpec, report: bool = False):
    """Weighted-L2 projection of the payoff onto the tensor space.

    The payoff is constant in y, so the 2D projection factorizes into the
    x^mu-weighted projection in x times the L2 projection of 1 in y.  With
    report=True also returns quasi-optimality and boundary-clipping
    diagnostics (relative weighted-L2 projection error, and the payoff value
    clipped at x = R_x).
    """
    bx, by = spec.basis_x(), spec.basis_y()
    cx = msh.project(payoff.sample, bx, spec.mu)
    cy = msh.project(lambda y: np.ones_like(y), by, 0.0)
    coeffs = np.outer(cx, cy).ravel()
    if not report:
        return coeffs
    # projection error of the x-factor in L2(x^mu), by cell quadrature
    nodes = bx.mesh.nodes
    err2 = 0.0
    ref2 = 0.0
    for c in range(bx.mesh.n_cells):
        x0, x1 = nodes[c], nodes[c + 1]
        err2 += integrate_power_weighted(
            lambda x: (payoff.sample(x) - bx.evaluate(cx, x)) ** 2, x0, x1, spec.mu, 12
        )
        ref2 += integrate_power_weighted(
            lambda x: payoff.sample(x) ** 2, x0, x1, spec.mu, 12
        )
    diag = {
        "projection_rel_error": math.sqrt(err2 / ref2) if ref2 > 0 else 0.0,
        "clip_at_R_x": float(payoff.sample(spec.R_x)),
    }
    return coeffs, diag


@dataclass
class PriceSurface:
    """Final coefficient surface with bilinear evaluation."""

    params: SabrParams
    payoff: Payoff
    spec: DiscretizationSpec
    config: ThetaConfig
    coefficients: np.ndarray
    diagnostics: dict

    def _grid(self):
        bx, by = self.spec.basis_x(), self.spec.basis_y()
        full = np.zeros((bx.mesh.n_nodes, by.mesh.n_nodes))
        grid = self.coefficients.reshape(bx.n_dofs, by.n_dofs)
        full[np.ix_(bx.dofs, by.dofs)] = grid
        return bx.mesh.nodes, by.mesh.nodes, full

    def value_at(self, x, y):
        """Piecewise-bilinear interpolation of the final surface."""
        xs, ys, full = self._grid()
        interp = RegularGridInterpolator((xs, ys), full, method="linear")
        pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
        out = interp(pts)
        return float(out) if out.size == 1 else out

    @property
    def point_price(self) -> float:
        return float(self.value_at(self.params.x0, math.log(self.params.y0)))

    def surface_rows(self):
        """(x, y, value) rows in x-major order, for CSV emission."""
        xs, ys, full = self._grid()
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                yield (x, y, full[i, j])


def _check_interior(p: SabrParams, spec: DiscretizationSpec) -> None:
    ln_y0 = math.log(p.y0)
    if not 0.0 < p.x0 < spec.R_x:
        raise ParameterError(f"x0={p.x0} not inside (0, {spec.R_x})")
    if not spec.y_lo < ln_y0 < spec.y_hi:
        raise ParameterError(
            f"ln(y0)={ln_y0:.4g} not inside ({spec.y_lo:.4g}, {spec.y_hi:.4g})"
        )
    if p.x0 > 0.9 * spec.R_x:
        warnings.warn(
            f"x0={p.x0} within 10% of the truncation R_x={spec.R_x}; "
            "localization error may dominate",
            RuntimeWarning,
            stacklevel=3,
        )
    if min(ln_y0 - spec.y_lo, spec.y_hi - ln_y0) < 0.1 * spec.R_y:
        warnings.warn(
            "ln(y0) within 10% of the log-vol truncation; "
            "localization error may dominate",
            RuntimeWarning,
            stacklevel=3,
        )


def price_european(
    p: SabrParams,
    payoff: Payoff,
    spec: DiscretizationSpec,
    config: ThetaConfig,
) -> PriceSurface:
    """Full pipeline: constants, assembly, projection, theta stepping."""
    validate_params(p)
    check_mu(p.beta, spec.mu)
    _check_interior(p, spec)
    ops = assemble_operators(p, spec)
    u0, diag = project_payoff(payoff, spec, report=True)
    stepper = build_stepper(ops.mass, ops.stiffness, config)
    traj = run_theta_scheme(stepper, u0, store_states=False)
    return PriceSurface(
        params=p,
        payoff=payoff,
        spec=spec,
        config=config,
        coefficients=traj.final,
        diagnostics=diag,
    )


def price_barrier(
    p: SabrParams,
    payoff: Payoff,
    spec: DiscretizationSpec,
    config: ThetaConfig,
    barrier: float,
) -> PriceSurface:
    """Up-and-out price: the truncated problem with R_x replaced by the barrier."""
    if barrier <= p.x0:
        raise ParameterError(f"barrier {barrier} must exceed x0={p.x0}")
    if barrier > spec.R_x:
        raise ParameterError(f"barrier {barrier} exceeds the domain R_x={spec.R_x}")
    nodes = spec.basis_x().mesh.nodes
    snapped = float(nodes[np.argmin(np.abs(nodes - barrier))])
    if not math.isclose(snapped, barrier, rel_tol=0.0, abs_tol=1e-12 * spec.R_x):
        warnings.warn(
            f"barrier {barrier} snapped to mesh node {snapped}",
            RuntimeWarning,
            stacklevel=2,
        )
    if snapped <= p.x0:
        raise ParameterError(f"snapped barrier {snapped} does not exceed x0={p.x0}")
    bspec = DiscretizationSpec(
        R_x=snapped,
        R_y=spec.R_y,
        L_x=spec.L_x,
        L_y=spec.L_y,
        mu=spec.mu,
        bc_x0=spec.bc_x0,
        y_center=spec.y_center,
        base_cells_x=spec.base_cells_x,
        base_cells_y=spec.base_cells_y,
    )
    return price_european(p, payoff, bspec, config)


@dataclass(frozen=True)
class MassAtZeroResult:
    """Small-eps put prices approximating P(X_T = 0), plus the estimate."""

    estimate: float
    table: np.ndarray  # rows (eps, price)


def mass_at_zero(
    p: SabrParams,
    T: float,
    spec: DiscretizationSpec,
    config: ThetaConfig,
    eps_sequence,
) -> MassAtZeroResult:
    """Approximate the absorbed mass by prices of payoffs max(1 - x/eps, 0).

    The operators are assembled and factorized once; each eps only changes the
    projected initial datum.  Returns every (eps, price) pair and the
    smallest-eps price as the estimate.  For beta = 1 the forward never hits
    zero and the result is identically 0.
    """
    if config.T != T:
        raise ParameterError("config.T must match the requested horizon T")
    eps_seq = [float(e) for e in eps_sequence]
    if p.beta == 1.0:
        return MassAtZeroResult(estimate=0.0, table=np.zeros((0, 2)))
    if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise ParameterError("eps_sequence must be strictly decreasing")
    validate_params(p)
    _check_interior(p, spec)
    h = spec.basis_x().mesh.cell_width
    if eps_seq and min(eps_seq) < 0.5 * h:
        warnings.warn(
            f"smallest eps {min(eps_seq)} is below half the cell width {h:.4g}; "
            "the indicator approximation is under-resolved",
            RuntimeWarning,
            stacklevel=2,
        )
    ops = assemble_operators(p, spec)
    stepper = build_stepper(ops.mass, ops.stiffness, config)
    xs, ys = spec.basis_x(), spec.basis_y()
    cy = msh.project(lambda y: np.ones_like(y), ys, 0.0)
    ln_y0 = math.log(p.y0)
    rows = []
    for eps in eps_seq:
        payoff = Payoff.mass_zero_put(eps)
        cx = msh.project(payoff.sample, xs, spec.mu)
        u0 = np.outer(cx, cy).ravel()
        traj = run_theta_scheme(stepper, u0, store_states=False)
        surf = PriceSurface(p, payoff, spec, config, traj.final, {})
        rows.append((eps, surf.value_at(p.x0, ln_y0)))
    table = np.asarray(rows)
    return MassAtZeroResult(estimate=float(table[-1, 1]), table=table)
