"""Weighted 1D building-block matrices and Kronecker tensor operators.

All bivariate operators are sums of Kronecker products of tridiagonal 1D
matrices: mass (M), stiffness (S), and convection (B) blocks against power
weights x^a in the forward coordinate and exponential weights e^{c y} in the
log-volatility coordinate.  The convection block carries the derivative on the
trial (column) function; the cross term transposes the y-block so the y
derivative lands on the test function, matching the mixed term of the bilinear
form.

Global numbering is x-major: dof (ix, iy) maps to ix * n_y + iy, which makes
the assembled systems banded with bandwidth ~ n_y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .mesh import FREE, ZERO, Basis1D, DyadicMesh
from .model import (
    CoefficientSet,
    ParameterError,
    SabrParams,
    check_mu,
    operator_coefficients,
    validate_params,
)
from .quad import SingularIntegralError, exp_weighted_moment, weighted_moment

KINDS = ("mass", "stiffness", "convection")
_DERIVS = {"mass": (0, 0), "stiffness": (1, 1), "convection": (1, 0)}


@dataclass(frozen=True)
class WeightSpec:
    """Separable weight on one axis: x^a (power) or e^{c y} (exponential)."""

    family: str
    param: float

    @classmethod
    def power(cls, exponent: float) -> "WeightSpec":
        return cls("power", float(exponent))

    @classmethod
    def exponential(cls, rate: float) -> "WeightSpec":
        return cls("exponential", float(rate))

    def __str__(self):
        if self.family == "power":
            return f"x^{self.param:g}"
        return f"exp({self.param:g}y)"


@dataclass(frozen=True)
class BlockMatrix1D:
    """1D Galerkin block: entries[i, j] = ∫ w · D^{s_tr} phi_j · D^{s_te} phi_i."""

    kind: str
    weight: WeightSpec
    basis: Basis1D
    entries: sp.csr_matrix


def assemble_1d(kind: str, weight: WeightSpec, basis: Basis1D) -> BlockMatrix1D:
    """Assemble a weighted 1D block matrix by exact per-cell integration.

    kind is one of 'mass' (0,0 derivatives), 'stiffness' (1,1), or
    'convection' (1,0: derivative on the trial/column function).  Power
    weights use the closed monomial rule (exact, including the singular first
    cell); exponential weights use closed-form e^{cy}-moments.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    trial_d, test_d = _DERIVS[kind]
    nodes = basis.mesh.nodes
    n = basis.mesh.n_nodes

    rows, cols, vals = [], [], []
    for c in range(basis.mesh.n_cells):
        x0, x1 = nodes[c], nodes[c + 1]
        for q in (0, 1):  # test (row)
            for p in (0, 1):  # trial (col)
                if weight.family == "power":
                    v = weighted_moment(x0, x1, weight.param, p, q, trial_d, test_d)
                else:
                    v = exp_weighted_moment(x0, x1, weight.param, p, q, trial_d, test_d)
                rows.append(c + q)
                cols.append(c + p)
                vals.append(v)
    full = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    entries = full[basis.dofs, :][:, basis.dofs].tocsr()
    return BlockMatrix1D(kind=kind, weight=weight, basis=basis, entries=entries)


@dataclass(frozen=True)
class DiscretizationSpec:
    """Truncated domain, refinement levels, weight exponent, and boundary flags.

    The domain is [0, R_x) x (y_lo, y_hi) with y_lo/y_hi = y_center -/+ R_y.
    x = R_x and y = y_lo, y_hi carry essential zero (knock-out) conditions;
    the x = 0 node is free by default so payoffs may carry value at the
    absorbing origin.
    """

    R_x: float
    R_y: float
    L_x: int
    L_y: int
    mu: float
    bc_x0: str = FREE
    y_center: float = 0.0
    base_cells_x: int = 1
    base_cells_y: int = 1

    def __post_init__(self):
        if self.R_x <= 0 or self.R_y <= 0:
            raise ParameterError("R_x and R_y must be positive")
        if self.bc_x0 not in (FREE, ZERO):
            raise ParameterError(f"unknown x=0 boundary flag {self.bc_x0!r}")

    @property
    def y_lo(self) -> float:
        return self.y_center - self.R_y

    @property
    def y_hi(self) -> float:
        return self.y_center + self.R_y

    def basis_x(self) -> Basis1D:
        mesh = DyadicMesh(0.0, self.R_x, self.L_x, self.base_cells_x)
        return Basis1D(mesh, bc_left=self.bc_x0, bc_right=ZERO)

    def basis_y(self) -> Basis1D:
        mesh = DyadicMesh(self.y_lo, self.y_hi, self.L_y, self.base_cells_y)
        return Basis1D(mesh, bc_left=ZERO, bc_right=ZERO)

    @property
    def n_dofs(self) -> int:
        return self.basis_x().n_dofs * self.basis_y().n_dofs


@dataclass(frozen=True)
class KroneckerTerm:
    """Provenance record for one Kronecker summand of an assembled operator."""

    coefficient: float
    kind_x: str
    weight_x: WeightSpec
    kind_y: str
    weight_y: WeightSpec
    transpose_y: bool = False

    def __str__(self):
        ty = ".T" if self.transpose_y else ""
        return (
            f"{self.coefficient:+g} * {self.kind_x}[{self.weight_x}] (x) "
            f"{self.kind_y}[{self.weight_y}]{ty}"
        )


@dataclass(frozen=True)
class TensorOperator:
    """Assembled mass / stiffness / V-norm Gram matrices with term provenance."""

    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    vnorm_gram: sp.csr_matrix
    terms: tuple
    spec: DiscretizationSpec
    coeffs: CoefficientSet


def _blocks(term: KroneckerTerm, bx: Basis1D, by: Basis1D) -> sp.csr_matrix:
    X = assemble_1d(term.kind_x, term.weight_x, bx).entries
    Y = assemble_1d(term.kind_y, term.weight_y, by).entries
    if term.transpose_y:
        Y = Y.T
    return term.coefficient * sp.kron(X, Y, format="csr")


def stiffness_terms(c: CoefficientSet, beta: float, mu: float) -> tuple:
    """The six Kronecker summands of the stiffness operator (zeros dropped)."""
    raw = [
        KroneckerTerm(c.Qxx, "stiffness", WeightSpec.power(2 * beta + mu),
                      "mass", WeightSpec.exponential(2.0)),
        KroneckerTerm(c.Qxy, "convection", WeightSpec.power(beta + mu),
                      "convection", WeightSpec.exponential(1.0), transpose_y=True),
        KroneckerTerm(c.Qyy, "mass", WeightSpec.power(mu),
                      "stiffness", WeightSpec.exponential(0.0)),
        KroneckerTerm(c.cx1, "convection", WeightSpec.power(2 * beta + mu - 1.0),
                      "mass", WeightSpec.exponential(2.0)),
        KroneckerTerm(c.cx2, "convection", WeightSpec.power(beta + mu),
                      "mass", WeightSpec.exponential(1.0)),
        KroneckerTerm(c.cy, "mass", WeightSpec.power(mu),
                      "convection", WeightSpec.exponential(0.0)),
    ]
    return tuple(t for t in raw if t.coefficient != 0.0)


def assemble_mass(spec: DiscretizationSpec, mu: float | None = None) -> sp.csr_matrix:
    """Bivariate mass matrix M^x_{x^mu} (x) M^y_1."""
    mu = spec.mu if mu is None else mu
    term = KroneckerTerm(1.0, "mass", WeightSpec.power(mu),
                         "mass", WeightSpec.exponential(0.0))
    return _blocks(term, spec.basis_x(), spec.basis_y())


def assemble_stiffness(
    p: SabrParams, spec: DiscretizationSpec, mu: float | None = None
) -> sp.csr_matrix:
    """Six-term Kronecker stiffness matrix of the bilinear form."""
    validate_params(p)
    mu = spec.mu if mu is None else mu
    check_mu(p.beta, mu)
    # The beta = 1/2, mu = -1 endpoint makes the first-order x-weight
    # x^{2 beta + mu - 1} = x^{-1} non-integrable against the free x=0 test hat.
    if p.beta >= 0.5 and 2.0 * p.beta + mu == 0.0:
        raise SingularIntegralError(
            f"x^{2 * p.beta + mu - 1:g} first-cell integral diverges for "
            f"beta={p.beta}, mu={mu} (admissibility endpoint)"
        )
    c = operator_coefficients(p, mu)
    bx, by = spec.basis_x(), spec.basis_y()
    terms = stiffness_terms(c, p.beta, mu)
    acc = None
    for t in terms:
        block = _blocks(t, bx, by)
        acc = block if acc is None else acc + block
    if acc is None:  # every coefficient zero (nu = 0, beta = mu = 0 corner)
        n = spec.n_dofs
        acc = sp.csr_matrix((n, n))
    return acc


def assemble_vnorm_gram(
    p: SabrParams, spec: DiscretizationSpec, mu: float | None = None
) -> sp.csr_matrix:
    """Gram matrix of the coercivity norm used by the Garding inequality."""
    mu = spec.mu if mu is None else mu
    check_mu(p.beta, mu)
    bx, by = spec.basis_x(), spec.basis_y()
    terms = (
        KroneckerTerm(1.0, "stiffness", WeightSpec.power(2 * p.beta + mu),
                      "mass", WeightSpec.exponential(2.0)),
        KroneckerTerm(1.0, "mass", WeightSpec.power(mu),
                      "stiffness", WeightSpec.exponential(0.0)),
        KroneckerTerm(1.0, "mass", WeightSpec.power(mu),
                      "mass", WeightSpec.exponential(0.0)),
    )
    acc = None
    for t in terms:
        block = _blocks(t, bx, by)
        acc = block if acc is None else acc + block
    return acc


def assemble_operators(p: SabrParams, spec: DiscretizationSpec) -> TensorOperator:
    """Assemble mass, stiffness, and V-norm Gram operators for one spec."""
    validate_params(p)
    check_mu(p.beta, spec.mu)
    c = operator_coefficients(p, spec.mu)
    return TensorOperator(
        mass=assemble_mass(spec),
        stiffness=assemble_stiffness(p, spec),
        vnorm_gram=assemble_vnorm_gram(p, spec),
        terms=stiffness_terms(c, p.beta, spec.mu),
        spec=spec,
        coeffs=c,
    )


def garding_matrix(op: TensorOperator, C2: float, C3: float) -> sp.csr_matrix:
    """sym(A) + C3 * M - C2 * G; its smallest eigenvalue tests the inequality."""
    sym = 0.5 * (op.stiffness + op.stiffness.T)
    return (sym + C3 * op.mass - C2 * op.vnorm_gram).tocsr()


def dump_matrix(matrix: sp.spmatrix, path) -> None:
    """Debug dump in Matrix Market coordinate text format."""
    mmwrite(str(path), sp.coo_matrix(matrix))


def dump_operator(op: TensorOperator, directory) -> None:
    """Write mass/stiffness/gram of an operator set as .mtx files."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dump_matrix(op.mass, d / "mass.mtx")
    dump_matrix(op.stiffness, d / "stiffness.mtx")
    dump_matrix(op.vnorm_gram, d / "gram.mtx")
