"""Dyadic meshes, hat-function bases, and the hierarchical multilevel transform.

The discretization spaces are nested piecewise-linear spaces on uniformly
bisected meshes.  The hierarchical transform splits a nodal vector into the
level-0 block plus per-level detail blocks (the multilevel surplus at each
newly created node), which is the coordinate system in which the multilevel
norm equivalences are read off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from .model import ParameterError
from .quad import integrate_power_weighted

FREE = "free"
ZERO = "zero"


@dataclass(frozen=True)
class DyadicMesh:
    """Uniform mesh on [a, b] with base_cells * 2**level cells."""

    a: float
    b: float
    level: int
    base_cells: int = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise ParameterError(f"empty interval [{self.a}, {self.b}]")
        if self.level < 0 or self.base_cells < 1:
            raise ParameterError("level must be >= 0 and base_cells >= 1")

    @property
    def n_cells(self) -> int:
        return self.base_cells * 2**self.level

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def cell_width(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.a + (self.b - self.a) * np.arange(self.n_nodes) / self.n_cells

    def refined(self, levels: int = 1) -> "DyadicMesh":
        return DyadicMesh(self.a, self.b, self.level + levels, self.base_cells)


def build_mesh(interval: tuple[float, float], level: int, base_cells: int = 1) -> DyadicMesh:
    """Uniform dyadic mesh on the interval; nodes are a + i*(b-a)/n_cells."""
    a, b = interval
    return DyadicMesh(a, b, level, base_cells)


@dataclass(frozen=True)
class Basis1D:
    """Nodal hat basis on a dyadic mesh with essential-zero or free endpoints.

    dofs lists the retained node indices; hat i is 1 at its node and supported
    on the (at most two) adjacent cells.
    """

    mesh: DyadicMesh
    bc_left: str = FREE
    bc_right: str = ZERO
    dofs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for bc in (self.bc_left, self.bc_right):
            if bc not in (FREE, ZERO):
                raise ParameterError(f"unknown boundary flag {bc!r}")
        lo = 0 if self.bc_left == FREE else 1
        hi = self.mesh.n_nodes if self.bc_right == FREE else self.mesh.n_nodes - 1
        object.__setattr__(self, "dofs", np.arange(lo, hi))

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    @property
    def dof_nodes(self) -> np.ndarray:
        return self.mesh.nodes[self.dofs]

    def full_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values on all mesh nodes, with zeros at constrained ones."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n_dofs:
            raise ValueError(
                f"expected {self.n_dofs} coefficients, got {coeffs.shape[-1]}"
            )
        full = np.zeros(coeffs.shape[:-1] + (self.mesh.n_nodes,))
        full[..., self.dofs] = coeffs
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[..., self.dofs]

    def evaluate(self, coeffs: np.ndarray, points) -> np.ndarray:
        """Piecewise-linear evaluation; exact at nodes."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        if pts.min() < self.mesh.a - 1e-12 or pts.max() > self.mesh.b + 1e-12:
            raise ValueError("evaluation point outside the mesh interval")
        full = self.full_values(coeffs)
        return np.interp(pts, self.mesh.nodes, full)

    def refined(self, levels: int = 1) -> "Basis1D":
        return Basis1D(self.mesh.refined(levels), self.bc_left, self.bc_right)

    def prolong(self, coeffs: np.ndarray, fine: "Basis1D") -> np.ndarray:
        """Exact re-expansion of a coarse function in a finer nested basis."""
        if fine.mesh.level < self.mesh.level:
            raise ValueError("target basis is coarser")
        return fine.restrict(
            np.interp(fine.mesh.nodes, self.mesh.nodes, self.full_values(coeffs))
        )


@dataclass(frozen=True)
class HierarchicalCoeffs:
    """Level-0 block plus per-level detail blocks of a multilevel expansion.

    details[l-1] holds the surplus at the nodes created on level l; its length
    is the codimension base_cells * 2**(l-1).
    """

    coarse: np.ndarray
    details: tuple

    @property
    def block_sizes(self) -> list[int]:
        return [len(self.coarse)] + [len(d) for d in self.details]


def _level_stride(mesh: DyadicMesh, l: int) -> int:
    return 2 ** (mesh.level - l)


def to_hierarchical(coeffs: np.ndarray, basis: Basis1D) -> HierarchicalCoeffs:
    """Nodal-to-hierarchical transform (linear, invertible)."""
    mesh = basis.mesh
    full = basis.full_values(coeffs)
    details = []
    for l in range(mesh.level, 0, -1):
        s = _level_stride(mesh, l)
        new = np.arange(s, mesh.n_nodes, 2 * s)  # nodes created on level l
        details.append(full[new] - 0.5 * (full[new - s] + full[new + s]))
    s0 = _level_stride(mesh, 0)
    coarse_full = full[::s0]
    lo = 0 if basis.bc_left == FREE else 1
    hi = len(coarse_full) if basis.bc_right == FREE else len(coarse_full) - 1
    return HierarchicalCoeffs(coarse=coarse_full[lo:hi], details=tuple(reversed(details)))


def to_nodal(hier: HierarchicalCoeffs, basis: Basis1D) -> np.ndarray:
    """Inverse of :func:`to_hierarchical`; exact round trip by construction."""
    mesh = basis.mesh
    full = np.zeros(mesh.n_nodes)
    s0 = _level_stride(mesh, 0)
    lo = 0 if basis.bc_left == FREE else 1
    coarse_idx = np.arange(0, mesh.n_nodes, s0)
    full[coarse_idx[lo:lo + len(hier.coarse)]] = hier.coarse
    for l in range(1, mesh.level + 1):
        s = _level_stride(mesh, l)
        new = np.arange(s, mesh.n_nodes, 2 * s)
        d = hier.details[l - 1]
        if len(d) != len(new):
            raise ValueError(f"level-{l} detail block has length {len(d)}, expected {len(new)}")
        full[new] = d + 0.5 * (full[new - s] + full[new + s])
    return basis.restrict(full)


def hierarchical_transform(coeffs, basis: Basis1D, direction: str = "hierarchical"):
    """Both directions of the multilevel transform behind one entry point."""
    if direction == "hierarchical":
        return to_hierarchical(coeffs, basis)
    if direction == "nodal":
        return to_nodal(coeffs, basis)
    raise ValueError(f"direction must be 'hierarchical' or 'nodal', got {direction!r}")


def project(f, basis: Basis1D, weight_exponent: float = 0.0, quad_order: int = 8) -> np.ndarray:
    """Weighted-L2 orthogonal projection of f onto the basis.

    Solves M_w c = b with M_w the x^a-weighted mass matrix and
    b_i = ∫ f phi_i x^a dx, computed cell-by-cell with Gauss rules (the
    monomial weight on the first cell is factored out exactly, see quad).
    Reproduces members of the span exactly up to roundoff.
    """
    from .assembly import WeightSpec, assemble_1d

    mass = assemble_1d("mass", WeightSpec.power(weight_exponent), basis).entries
    nodes = basis.mesh.nodes
    rhs_full = np.zeros(basis.mesh.n_nodes)
    for c in range(basis.mesh.n_cells):
        x0, x1 = nodes[c], nodes[c + 1]
        h = x1 - x0
        left = integrate_power_weighted(
            lambda x: np.asarray(f(x)) * (x1 - x) / h, x0, x1, weight_exponent, quad_order
        )
        right = integrate_power_weighted(
            lambda x: np.asarray(f(x)) * (x - x0) / h, x0, x1, weight_exponent, quad_order
        )
        rhs_full[c] += left
        rhs_full[c + 1] += right
    rhs = basis.restrict(rhs_full)
    return spsolve(mass.tocsc(), rhs)


def evaluate(coeffs, basis: Basis1D, points):
    """Module-level alias for :meth:`Basis1D.evaluate`."""
    return basis.evaluate(coeffs, points)
