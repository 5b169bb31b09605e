"""Independent reference prices and convergence-rate studies.

Everything here deliberately avoids the finite element path: Black-Scholes
and the absorbed-CEV noncentral chi-squared formula are closed forms, the
Monte Carlo engine simulates the SDE directly (exact lognormal volatility,
Euler forward with permanent absorption at zero), and the rate studies
measure errors against refined references or fine quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm

from . import mesh as msh
from .assembly import DiscretizationSpec, assemble_mass, assemble_operators, assemble_vnorm_gram
from .model import ParameterError, SabrParams, validate_params
from .pricing import Payoff, project_payoff
from .quad import integrate_power_weighted
from .stepping import ThetaConfig, build_stepper, run_theta_scheme

# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def black_scholes_price(sigma: float, x0: float, K: float, T: float, kind: str = "put") -> float:
    """Lognormal price with zero rates; sigma*sqrt(T) -> 0 gives the intrinsic."""
    if kind not in ("put", "call"):
        raise ParameterError(f"kind must be 'put' or 'call', got {kind!r}")
    if x0 <= 0 or K <= 0 or T < 0 or sigma < 0:
        raise ParameterError("need x0, K > 0 and sigma, T >= 0")
    s = sigma * math.sqrt(T)
    if s == 0.0:
        intrinsic = x0 - K if kind == "call" else K - x0
        return max(intrinsic, 0.0)
    d1 = (math.log(x0 / K) + 0.5 * s * s) / s
    d2 = d1 - s
    if kind == "call":
        return x0 * norm.cdf(d1) - K * norm.cdf(d2)
    return K * norm.cdf(-d2) - x0 * norm.cdf(-d1)


def noncentral_chi2_cdf(z, df: float, nc: float, tol: float = 1e-12, max_terms: int = 100_000):
    """CDF of the noncentral chi-squared law by the central-chi2 mixture series.

    F(z; df, nc) = sum_j Poisson(j; nc/2) * Chi2CDF(z; df + 2j), summed
    outward from the Poisson mode until the neglected weight is below tol.
    """
    z = np.asarray(z, dtype=float)
    if nc < 0 or df <= 0:
        raise ParameterError("need nc >= 0 and df > 0")
    if nc == 0.0:
        return chi2.cdf(z, df)
    lam = 0.5 * nc
    j0 = int(lam)
    logw0 = -lam + j0 * math.log(lam) - math.lgamma(j0 + 1)
    js, ws = [j0], [math.exp(logw0)]
    # downward from the mode
    w = ws[0]
    for j in range(j0, 0, -1):
        w = w * j / lam
        if w < tol / 4.0:
            break
        js.append(j - 1)
        ws.append(w)
    # upward from the mode
    w = ws[0]
    j = j0
    while len(js) < max_terms:
        j += 1
        w = w * lam / j
        if w < tol / 4.0 and j > lam:
            break
        js.append(j)
        ws.append(w)
    ws = np.asarray(ws)
    js = np.asarray(js)
    wsum = ws.sum()
    if 1.0 - wsum > tol:
        warnings.warn(
            f"noncentral chi2 series truncated with residual weight {1 - wsum:.2e}",
            RuntimeWarning,
            stacklevel=2,
        )
    cdfs = chi2.cdf(z[..., None], df + 2.0 * js)
    out = cdfs @ ws
    return float(out) if out.ndim == 0 else out


def _absorbed_gaussian_put(sigma: float, x0: float, K: float, T: float) -> float:
    """Put on arithmetic Brownian motion absorbed at 0 (CEV beta = 0)."""
    s = sigma * math.sqrt(T)
    if s == 0.0:
        return max(K - x0, 0.0)

    def partial(m):
        a = -m / s
        b = (K - m) / s
        return (K - m) * (norm.cdf(b) - norm.cdf(a)) + s * (norm.pdf(b) - norm.pdf(a))

    return K * 2.0 * norm.cdf(-x0 / s) + partial(x0) - partial(-x0)


def cev_exact_price(
    sigma: float, beta: float, x0: float, K: float, T: float, kind: str = "put"
) -> float:
    """Exact price under dX = sigma X^beta dW with absorption at zero.

    Uses the noncentral chi-squared representation of the absorbed transition
    law for beta in (0, 1); beta = 1 is lognormal and beta = 0 is absorbed
    Brownian motion, both closed forms.
    """
    if kind not in ("put", "call"):
        raise ParameterError(f"kind must be 'put' or 'call', got {kind!r}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta={beta} outside [0, 1]")
    if beta == 1.0:
        return black_scholes_price(sigma, x0, K, T, kind)
    if beta == 0.0:
        put = _absorbed_gaussian_put(sigma, x0, K, T)
        return put if kind == "put" else put + x0 - K
    if sigma == 0.0 or T == 0.0:
        intrinsic = K - x0 if kind == "put" else x0 - K
        return max(intrinsic, 0.0)
    bc = 1.0 - beta
    denom = bc * bc * sigma * sigma * T
    x_nc = x0 ** (2.0 * bc) / denom
    y_nc = K ** (2.0 * bc) / denom
    df_low = 1.0 / bc
    df_high = 2.0 + 1.0 / bc
    if kind == "call":
        return x0 * (1.0 - noncentral_chi2_cdf(y_nc, df_high, x_nc)) - K * noncentral_chi2_cdf(
            x_nc, df_low, y_nc
        )
    return K * (1.0 - noncentral_chi2_cdf(x_nc, df_low, y_nc)) - x0 * noncentral_chi2_cdf(
        y_nc, df_high, x_nc
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McConfig:
    """Path count, Euler step count, and the 64-bit seed of the path streams."""

    n_paths: int
    n_steps: int
    seed: int
    chunk: int = 8192  # batching only; draws are per-path and chunk-invariant

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ParameterError("n_paths and n_steps must be >= 1")


@dataclass(frozen=True)
class McResult:
    mean: float
    stderr: float
    absorbed_fraction: float
    absorbed_stderr: float
    n_paths: int


def _path_normals(seed: int, start: int, count: int, n_steps: int) -> np.ndarray:
    """Standard normals for paths [start, start+count), shape (count, n_steps, 2).

    Each path owns an independent Philox stream keyed by (seed, path index),
    so results do not depend on chunking or execution order.
    """
    out = np.empty((count, 2 * n_steps))
    for i in range(count):
        key = np.array([seed & 0xFFFFFFFFFFFFFFFF, start + i], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        out[i] = gen.standard_normal(2 * n_steps)
    return out.reshape(count, n_steps, 2)


def mc_price(
    p: SabrParams,
    payoff,
    T: float,
    config: McConfig,
    barrier: float | None = None,
) -> McResult:
    """Monte Carlo price with exact lognormal volatility and Euler forward.

    ln Y is advanced exactly (nu Z_t - nu^2 t / 2); X takes Euler steps
    Y X^beta dW with W, Z rho-correlated, and is clamped to zero permanently
    once it crosses (absorption).  With a barrier, paths touching X >= barrier
    are knocked out and contribute zero.  payoff may be a Payoff or a callable
    on the terminal forward; absorbed paths contribute payoff(0).
    """
    validate_params(p)
    fn = payoff.sample if isinstance(payoff, Payoff) else payoff
    dt = T / config.n_steps
    sq = math.sqrt(dt)
    rho_c = math.sqrt(max(0.0, 1.0 - p.rho * p.rho))

    # per-path values are reduced once at the end so the result is independent
    # of the chunking (identical summation tree for identical draws)
    values = np.empty(config.n_paths)
    absorbed_flags = np.empty(config.n_paths, dtype=bool)
    done = 0
    while done < config.n_paths:
        m = min(config.chunk, config.n_paths - done)
        z = _path_normals(config.seed, done, m, config.n_steps)
        x = np.full(m, p.x0)
        ln_y = np.full(m, math.log(p.y0))
        alive = np.ones(m, dtype=bool)
        knocked = np.zeros(m, dtype=bool)
        for s in range(config.n_steps):
            z1 = z[:, s, 0]
            z2 = z[:, s, 1]
            dw = sq * (p.rho * z1 + rho_c * z2)
            y = np.exp(ln_y)
            upd = alive & ~knocked
            x = np.where(upd, x + y * np.abs(x) ** p.beta * dw, x)
            hit_zero = upd & (x <= 0.0)
            x = np.where(hit_zero, 0.0, x)
            alive &= ~hit_zero
            if barrier is not None:
                hit_bar = (x >= barrier) & ~knocked
                knocked |= hit_bar
            ln_y += p.nu * sq * z1 - 0.5 * p.nu**2 * dt
        vals = np.asarray(fn(x), dtype=float)
        values[done:done + m] = np.where(knocked, 0.0, vals)
        absorbed_flags[done:done + m] = ~alive & ~knocked
        done += m
    n = config.n_paths
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if n > 1 else 0.0
    frac = float(absorbed_flags.mean())
    return McResult(
        mean=mean,
        stderr=math.sqrt(var / n),
        absorbed_fraction=frac,
        absorbed_stderr=math.sqrt(max(frac * (1.0 - frac), 0.0) / n),
        n_paths=n,
    )


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    """(level-or-k, error) grids with least-squares fitted rates."""

    axis: str  # "level" or "k"
    xs: np.ndarray
    errors: dict
    slopes: dict
    reference: str

    def monotone(self, key: str) -> bool:
        e = self.errors[key]
        return bool(np.all(np.diff(e) <= 1e-14 + 0.0 * e[:-1]) or np.all(np.diff(e) < 0))


def fit_rate(xs: np.ndarray, errors: np.ndarray, axis: str = "level", drop_first: bool = True) -> float:
    """OLS slope of log2(error): decay rate per level, or order in k.

    Per the study conventions the coarsest point is dropped from the fit when
    at least three points remain.
    """
    xs = np.asarray(xs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > 0
    xs, errors = xs[keep], errors[keep]
    if drop_first and len(xs) > 3:
        xs, errors = xs[1:], errors[1:]
    if len(xs) < 2:
        return math.nan
    ordinate = np.log2(errors)
    abscissa = xs if axis == "level" else np.log2(xs)
    slope = np.polyfit(abscissa, ordinate, 1)[0]
    return float(-slope) if axis == "level" else float(slope)


def _solve_on(p, payoff, spec, config):
    ops = assemble_operators(p, spec)
    u0 = project_payoff(payoff, spec)
    stepper = build_stepper(ops.mass, ops.stiffness, config)
    return run_theta_scheme(stepper, u0, store_states=False).final


def _prolong_2d(coeffs, spec_from: DiscretizationSpec, spec_to: DiscretizationSpec):
    bx0, by0 = spec_from.basis_x(), spec_from.basis_y()
    bx1, by1 = spec_to.basis_x(), spec_to.basis_y()
    grid = coeffs.reshape(bx0.n_dofs, by0.n_dofs)
    px = np.vstack([bx0.prolong(grid[:, j], bx1) for j in range(by0.n_dofs)]).T
    out = np.vstack([by0.prolong(px[i, :], by1) for i in range(bx1.n_dofs)])
    return out.ravel()


def spatial_convergence_study(
    p: SabrParams,
    payoff: Payoff,
    levels,
    config: ThetaConfig,
    spec_template: DiscretizationSpec,
    refine_gap: int = 2,
) -> ConvergenceReport:
    """Error decay under simultaneous x/y refinement against an L+2 reference.

    Errors of the final-time solution are measured in the discrete H-norm
    (mass matrix) and energy norm (V-norm Gram) of the reference grid, after
    exact prolongation of each coarse solution.
    """
    levels = sorted(int(l) for l in levels)
    l_ref = levels[-1] + refine_gap

    def spec_at(l):
        return DiscretizationSpec(
            R_x=spec_template.R_x,
            R_y=spec_template.R_y,
            L_x=l,
            L_y=l,
            mu=spec_template.mu,
            bc_x0=spec_template.bc_x0,
            y_center=spec_template.y_center,
            base_cells_x=spec_template.base_cells_x,
            base_cells_y=spec_template.base_cells_y,
        )

    ref_spec = spec_at(l_ref)
    ref_config = ThetaConfig(config.theta, config.T, 4 * config.M_steps)
    u_ref = _solve_on(p, payoff, ref_spec, ref_config)
    mass_ref = assemble_mass(ref_spec)
    gram_ref = assemble_vnorm_gram(p, ref_spec)

    err_h, err_e = [], []
    for l in levels:
        u_l = _solve_on(p, payoff, spec_at(l), config)
        e = u_ref - _prolong_2d(u_l, spec_at(l), ref_spec)
        err_h.append(math.sqrt(max(float(e @ (mass_ref @ e)), 0.0)))
        err_e.append(math.sqrt(max(float(e @ (gram_ref @ e)), 0.0)))
    err_h = np.asarray(err_h)
    err_e = np.asarray(err_e)
    report = ConvergenceReport(
        axis="level",
        xs=np.asarray(levels, dtype=float),
        errors={"H": err_h, "energy": err_e},
        slopes={"H": fit_rate(levels, err_h), "energy": fit_rate(levels, err_e)},
        reference=f"L={l_ref}, M_steps={ref_config.M_steps}",
    )
    for key in report.errors:
        if not report.monotone(key):
            warnings.warn(f"non-monotone {key}-error sequence", RuntimeWarning, stacklevel=2)
    return report


def temporal_convergence_study(
    p: SabrParams,
    payoff: Payoff,
    spec: DiscretizationSpec,
    m_steps_sequence,
    theta: float,
    T: float,
) -> ConvergenceReport:
    """Temporal order on a fixed spatial grid against a 4x-finer-k reference."""
    ms = sorted(int(m) for m in m_steps_sequence)
    ops = assemble_operators(p, spec)
    u0 = project_payoff(payoff, spec)
    mass = ops.mass

    def final(m_steps):
        cfg = ThetaConfig(theta, T, m_steps)
        stepper = build_stepper(ops.mass, ops.stiffness, cfg)
        return run_theta_scheme(stepper, u0, store_states=False).final

    u_ref = final(4 * ms[-1])
    ks, errs = [], []
    for m in ms:
        e = final(m) - u_ref
        ks.append(T / m)
        errs.append(math.sqrt(max(float(e @ (mass @ e)), 0.0)))
    ks = np.asarray(ks)[::-1]
    errs = np.asarray(errs)[::-1]  # increasing k
    return ConvergenceReport(
        axis="k",
        xs=ks,
        errors={"H": errs},
        slopes={"H": fit_rate(ks, errs, axis="k", drop_first=False)},
        reference=f"M_steps={4 * ms[-1]}",
    )


def projection_rate_study(
    mu: float,
    f,
    fprime,
    levels,
    interval: tuple[float, float] = (0.0, 1.0),
    quad_order: int = 16,
) -> ConvergenceReport:
    """Weighted projection error decay: L2(x^{mu/2}) and weighted H1 rates.

    Errors are fine Gauss quadratures of the error integrand itself (the
    oracle side), independent of the mass-matrix plumbing used to build the
    projection.
    """
    levels = sorted(int(l) for l in levels)
    e0, e1 = [], []
    for l in levels:
        basis = msh.Basis1D(msh.DyadicMesh(interval[0], interval[1], l), bc_left=msh.FREE, bc_right=msh.FREE)
        coeffs = msh.project(f, basis, mu)
        nodes = basis.mesh.nodes
        acc0 = 0.0
        acc1 = 0.0
        for c in range(basis.mesh.n_cells):
            x0, x1 = nodes[c], nodes[c + 1]
            slope = (coeffs[c + 1] - coeffs[c]) / (x1 - x0)
            acc0 += integrate_power_weighted(
                lambda x: (np.asarray(f(x)) - basis.evaluate(coeffs, x)) ** 2,
                x0, x1, mu, quad_order,
            )
            acc1 += integrate_power_weighted(
                lambda x: (np.asarray(fprime(x)) - slope) ** 2, x0, x1, mu, quad_order
            )
        e0.append(math.sqrt(acc0))
        e1.append(math.sqrt(acc0 + acc1))
    e0 = np.asarray(e0)
    e1 = np.asarray(e1)
    return ConvergenceReport(
        axis="level",
        xs=np.asarray(levels, dtype=float),
        errors={"L2w": e0, "H1w": e1},
        slopes={"L2w": fit_rate(levels, e0), "H1w": fit_rate(levels, e1)},
        reference="fine Gauss quadrature of the error integrand",
    )
