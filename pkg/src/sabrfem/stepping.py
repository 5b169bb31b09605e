"""Theta-scheme time stepping for the semi-discrete system M u' + A u = g.

One sparse LU factorization of (M/k + theta*A) is built per configuration and
reused for every step.  The stability report checks the discrete energy
estimate

    ||u^M||_H^2 + C1 k sum ||u^{m+theta}||_H^2
        <= ||u^0||_H^2 + C2 k sum ||g^{m+theta}||_*^2

for theta >= 1/2, with the dual norm realized discretely through the V-norm
Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .model import ParameterError


@dataclass(frozen=True)
class ThetaConfig:
    """Scheme parameter, horizon, and uniform step count; k = T / M_steps."""

    theta: float
    T: float
    M_steps: int

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError(f"theta={self.theta} outside [0, 1]")
        if self.T <= 0.0 or self.M_steps < 1:
            raise ParameterError("T must be > 0 and M_steps >= 1")

    @property
    def k(self) -> float:
        return self.T / self.M_steps

    @property
    def times(self) -> np.ndarray:
        return self.k * np.arange(self.M_steps + 1)


@dataclass
class Trajectory:
    """Coefficient vectors u^0..u^M (or just the endpoints when not stored)."""

    config: ThetaConfig
    states: np.ndarray  # (M_steps + 1, n) if stored, else (2, n) = (u0, uM)
    stored: bool = True
    h_norms: np.ndarray | None = None

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


class ThetaStepper:
    """Reusable stepper: factorizes (M/k + theta*A) once."""

    def __init__(self, mass: sp.spmatrix, stiffness: sp.spmatrix, config: ThetaConfig):
        if mass.shape != stiffness.shape or mass.shape[0] != mass.shape[1]:
            raise ValueError("mass and stiffness must be square with equal shapes")
        self.config = config
        self.mass = mass.tocsr()
        self.stiffness = stiffness.tocsr()
        k, theta = config.k, config.theta
        self._rhs_op = (self.mass / k - (1.0 - theta) * self.stiffness).tocsr()
        system = (self.mass / k + theta * self.stiffness).tocsc()
        try:
            self._lu = splu(system)
        except RuntimeError as exc:
            raise ParameterError(f"singular system matrix M/k + theta*A: {exc}") from exc

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    def step(self, u: np.ndarray, load: np.ndarray | None = None) -> np.ndarray:
        """One step: solve (M/k + theta*A) u_next = (M/k - (1-theta)*A) u + load."""
        rhs = self._rhs_op @ u
        if load is not None:
            rhs = rhs + load
        return self._lu.solve(rhs)


def build_stepper(mass, stiffness, config: ThetaConfig) -> ThetaStepper:
    return ThetaStepper(mass, stiffness, config)


def run_theta_scheme(
    stepper: ThetaStepper,
    u0: np.ndarray,
    forcing=None,
    store_states: bool = True,
) -> Trajectory:
    """Run the scheme from u0 over the configured horizon.

    forcing, if given, is a callable t -> load vector (the duality pairing of
    g(t) with the basis); the step uses the theta-combination
    theta*g(t^{m+1}) + (1-theta)*g(t^m).  Aborts on non-finite values.
    """
    cfg = stepper.config
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (stepper.n,):
        raise ValueError(f"u0 has shape {u0.shape}, expected ({stepper.n},)")
    u = u0
    states = [u0.copy()] if store_states else None
    times = cfg.times
    g_now = None if forcing is None else np.asarray(forcing(times[0]), dtype=float)
    for m in range(cfg.M_steps):
        load = None
        if forcing is not None:
            g_next = np.asarray(forcing(times[m + 1]), dtype=float)
            load = cfg.theta * g_next + (1.0 - cfg.theta) * g_now
            g_now = g_next
        u = stepper.step(u, load)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"non-finite state at step {m + 1}")
        if store_states:
            states.append(u.copy())
    if store_states:
        return Trajectory(config=cfg, states=np.asarray(states), stored=True)
    return Trajectory(config=cfg, states=np.asarray([u0, u]), stored=False)


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of the discrete stability estimate with its two sides."""

    passed: bool
    lhs: float
    rhs: float
    C1: float
    C2: float
    margin: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "margin", self.rhs - self.lhs)


def dual_norm_sq(load: np.ndarray, gram: sp.spmatrix) -> float:
    """Squared discrete dual norm sup_v (load.v)^2 / v'Gv = load' G^{-1} load."""
    z = splu(gram.tocsc()).solve(np.asarray(load, dtype=float))
    return float(load @ z)


def stability_report(
    trajectory: Trajectory,
    mass: sp.spmatrix,
    gram: sp.spmatrix | None = None,
    loads: np.ndarray | None = None,
    C1: float = 1.0,
    C2: float | None = None,
    rtol: float = 1e-10,
) -> StabilityReport:
    """Check the theta-scheme stability estimate on a stored trajectory.

    loads holds the theta-averaged load vectors per step (shape (M_steps, n)),
    or None for the homogeneous case.  Requires theta >= 1/2; the theta < 1/2
    regime needs the inverse CFL quantity lambda_A = sup ||v||_H^2 / ||v||_*^2,
    which this engine does not compute.
    """
    cfg = trajectory.config
    if cfg.theta < 0.5:
        raise ParameterError(
            "stability_report requires theta >= 1/2 (theta < 1/2 needs the "
            "discrete constant lambda_A, unsupported)"
        )
    if not trajectory.stored:
        raise ValueError("stability_report needs a fully stored trajectory")
    if not 0.0 < C1 < 2.0:
        raise ParameterError(f"C1={C1} outside (0, 2)")
    if C2 is None:
        C2 = 1.0 / (2.0 - C1)
    elif C2 < 1.0 / (2.0 - C1):
        raise ParameterError(f"C2={C2} below 1/(2-C1)")

    M = mass.tocsr()
    states = trajectory.states
    k, theta = cfg.k, cfg.theta

    def h_sq(v):
        return float(v @ (M @ v))

    mids = theta * states[1:] + (1.0 - theta) * states[:-1]
    lhs = h_sq(states[-1]) + C1 * k * sum(h_sq(v) for v in mids)
    rhs = h_sq(states[0])
    if loads is not None:
        if gram is None:
            raise ValueError("gram matrix required to measure forcing dual norms")
        lu = splu(gram.tocsc())
        for g in np.atleast_2d(loads):
            rhs += C2 * k * float(g @ lu.solve(np.asarray(g, dtype=float)))
    passed = lhs <= rhs * (1.0 + rtol) + 1e-300
    return StabilityReport(passed=passed, lhs=lhs, rhs=rhs, C1=C1, C2=C2)
