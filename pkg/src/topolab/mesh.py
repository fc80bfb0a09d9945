"""Structured Q4 mesh and linear-elastic solves on a rectangular design domain.

The domain is a regular nx-by-ny grid of square bilinear (Q4) plane-stress
elements with unit thickness.  Node (ix, iy) has id iy*(nx+1)+ix and carries
DOFs (2*id, 2*id+1) for (ux, uy); element (ex, ey) has id ey*nx+ex with nodes
listed counterclockwise from the lower-left corner.  The y axis points up, so
element row ey=0 is the bottom of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PRESETS = ("mbb_half", "cantilever", "custom")

# Relative residual the displacement solve must reach, ||K_ff u_f - f_f|| <= RTOL*||F||.
SOLVE_RTOL = 1e-10
_REFINE_STEPS = 3


class SolveError(RuntimeError):
    """Linear solve failed: singular system or residual tolerance not met."""


def element_stiffness(nu: float) -> np.ndarray:
    """8x8 stiffness matrix of a unit-square plane-stress Q4 element with E=1.

    Integrated with 2x2 Gauss quadrature, which is exact for this integrand.
    For square elements the matrix is independent of the side length h
    (the h^2 area factor cancels against the 1/h^2 from the B matrices).
    """
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    D = np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]
    ) / (1.0 - nu**2)
    g = 1.0 / np.sqrt(3.0)
    ke = np.zeros((8, 8))
    for xi in (-g, g):
        for eta in (-g, g):
            # shape function gradients on the [-1,1]^2 parent, CCW node order
            dN_dxi = 0.25 * np.array(
                [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)]
            )
            dN_deta = 0.25 * np.array(
                [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)]
            )
            # unit square: jacobian is diag(1/2, 1/2), det 1/4
            dN_dx = 2.0 * dN_dxi
            dN_dy = 2.0 * dN_deta
            B = np.zeros((3, 8))
            B[0, 0::2] = dN_dx
            B[1, 1::2] = dN_dy
            B[2, 0::2] = dN_dy
            B[2, 1::2] = dN_dx
            ke += 0.25 * B.T @ D @ B
    # quadrature is symmetric up to rounding; make it exact so assembly scatters
    # bitwise-identical values to (i, j) and (j, i)
    return (ke + ke.T) / 2.0


@dataclass
class MeshModel:
    """Geometry, connectivity, boundary conditions, and point loads.

    loads maps global DOF index to applied force.  fixed_dofs are homogeneous
    Dirichlet constraints.  Derived arrays (coordinates, connectivity, element
    volumes and centers) are filled in by :func:`build_mesh`.
    """

    nx: int
    ny: int
    h: float
    preset: str
    node_coords: np.ndarray
    elem_nodes: np.ndarray
    elem_dofs: np.ndarray
    elem_volumes: np.ndarray
    elem_centers: np.ndarray
    fixed_dofs: np.ndarray
    loads: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.nx}x{self.ny}")
        if not self.h > 0.0:
            raise ValueError(f"element size must be positive, got {self.h}")
        n_nodes = (self.nx + 1) * (self.ny + 1)
        if self.node_coords.shape != (n_nodes, 2):
            raise ValueError("node_coords shape does not match grid dimensions")
        if self.elem_nodes.shape != (self.n_elems, 4):
            raise ValueError("elem_nodes shape does not match grid dimensions")
        if np.unique(self.elem_nodes, axis=1).shape[1] != 4:
            raise ValueError("element corner nodes must be distinct")
        # counterclockwise orientation: shoelace area of every element positive
        xy = self.node_coords[self.elem_nodes]
        x, y = xy[..., 0], xy[..., 1]
        area2 = np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        if not np.all(area2 > 0.0):
            raise ValueError("element nodes must be ordered counterclockwise")
        if self.fixed_dofs.size:
            if self.fixed_dofs.min() < 0 or self.fixed_dofs.max() >= self.n_dofs:
                raise ValueError("fixed DOF index out of range")
            if np.unique(self.fixed_dofs).size != self.fixed_dofs.size:
                raise ValueError("fixed DOF indices must be unique")
        for dof in self.loads:
            if not 0 <= dof < self.n_dofs:
                raise ValueError(f"load DOF {dof} out of range")

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elems(self) -> int:
        return self.nx * self.ny

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def total_volume(self) -> float:
        return float(self.elem_volumes.sum())

    @property
    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_dofs), self.fixed_dofs)

    def force_vector(self) -> np.ndarray:
        f = np.zeros(self.n_dofs)
        for dof, value in self.loads.items():
            f[dof] += value
        return f


def build_mesh(nx: int, ny: int, h: float, preset: str = "mbb_half") -> MeshModel:
    """Construct a structured mesh with one of the boundary-condition presets.

    mbb_half: half of a simply supported beam with a central point load;
    symmetry plane on the left (ux fixed along the left edge), vertical
    roller support at the bottom-right corner node, unit downward load at
    the top-left corner node.

    cantilever: left edge fully clamped, unit downward load at the middle
    of the right edge.

    custom: no supports and no loads; the caller fills them in.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of {PRESETS}")
    if nx < 1 or ny < 1:
        raise ValueError(f"grid must be at least 1x1, got {nx}x{ny}")
    if not h > 0.0:
        raise ValueError(f"element size must be positive, got {h}")

    ix, iy = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    node_coords = h * np.column_stack([ix.ravel(), iy.ravel()]).astype(float)

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ex, ey = ex.ravel(), ey.ravel()
    n00 = ey * (nx + 1) + ex
    elem_nodes = np.column_stack([n00, n00 + 1, n00 + nx + 2, n00 + nx + 1])
    elem_dofs = np.empty((nx * ny, 8), dtype=int)
    elem_dofs[:, 0::2] = 2 * elem_nodes
    elem_dofs[:, 1::2] = 2 * elem_nodes + 1

    elem_volumes = np.full(nx * ny, h * h)
    elem_centers = h * np.column_stack([ex + 0.5, ey + 0.5])

    loads: dict[int, float] = {}
    if preset == "mbb_half":
        left_nodes = np.arange(ny + 1) * (nx + 1)
        bottom_right = nx
        fixed = np.concatenate([2 * left_nodes, [2 * bottom_right + 1]])
        top_left = ny * (nx + 1)
        loads[2 * top_left + 1] = -1.0
    elif preset == "cantilever":
        left_nodes = np.arange(ny + 1) * (nx + 1)
        fixed = np.concatenate([2 * left_nodes, 2 * left_nodes + 1])
        mid_right = (ny // 2) * (nx + 1) + nx
        loads[2 * mid_right + 1] = -1.0
    else:
        fixed = np.empty(0, dtype=int)

    return MeshModel(
        nx=nx,
        ny=ny,
        h=h,
        preset=preset,
        node_coords=node_coords,
        elem_nodes=elem_nodes,
        elem_dofs=elem_dofs,
        elem_volumes=elem_volumes,
        elem_centers=elem_centers,
        fixed_dofs=np.sort(fixed.astype(int)),
        loads=loads,
    )


@dataclass
class ElasticState:
    """Displacement solution of K(E) u = f with the factorization kept around."""

    u: np.ndarray
    f: np.ndarray
    residual: float
    factorization: object = None


def assemble_system(mesh: MeshModel, moduli: np.ndarray, nu: float) -> sp.csc_matrix:
    """Assemble the global stiffness matrix sum_i E_i * scatter(k0)."""
    moduli = np.asarray(moduli, dtype=float)
    if moduli.shape != (mesh.n_elems,):
        raise ValueError("need one modulus per element")
    if not np.all(moduli > 0.0):
        raise ValueError("element moduli must be positive")
    k0 = element_stiffness(nu)
    rows = np.repeat(mesh.elem_dofs, 8, axis=1).ravel()
    cols = np.tile(mesh.elem_dofs, (1, 8)).ravel()
    vals = (moduli[:, None] * k0.ravel()[None, :]).ravel()
    K = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs))
    return K.tocsc()


def assemble_and_solve(mesh: MeshModel, moduli: np.ndarray, nu: float) -> ElasticState:
    """Solve the constrained elastic system for the given element moduli.

    Factorizes the free-DOF block once (the factorization is reused for
    sensitivity work via the returned state) and refines the solution until
    the free-DOF residual is at most SOLVE_RTOL * ||f||.
    """
    if mesh.fixed_dofs.size < 3:
        raise ValueError(
            "boundary conditions must fix at least 3 DOFs to remove rigid-body modes"
        )
    K = assemble_system(mesh, moduli, nu)
    f = mesh.force_vector()
    free = mesh.free_dofs
    K_ff = K[np.ix_(free, free)].tocsc()
    f_f = f[free]
    f_norm = float(np.linalg.norm(f))
    try:
        lu = splu(K_ff)
    except RuntimeError as exc:
        raise SolveError(f"stiffness factorization failed: {exc}") from exc
    u_f = lu.solve(f_f)
    if not np.all(np.isfinite(u_f)):
        raise SolveError("solve produced non-finite displacements (singular system?)")
    residual = float(np.linalg.norm(f_f - K_ff @ u_f))
    for _ in range(_REFINE_STEPS):
        if residual <= SOLVE_RTOL * f_norm:
            break
        u_f = u_f + lu.solve(f_f - K_ff @ u_f)
        residual = float(np.linalg.norm(f_f - K_ff @ u_f))
    if residual > SOLVE_RTOL * f_norm:
        raise SolveError(
            f"residual {residual:.3e} exceeds {SOLVE_RTOL:.1e} * ||f|| = "
            f"{SOLVE_RTOL * f_norm:.3e}"
        )
    u = np.zeros(mesh.n_dofs)
    u[free] = u_f
    return ElasticState(u=u, f=f, residual=residual, factorization=lu)


def compliance(state: ElasticState) -> float:
    """External work f.u, equal to u.K.u for the solved state."""
    return float(state.f @ state.u)


def element_compliances(mesh: MeshModel, state: ElasticState, nu: float) -> np.ndarray:
    """Per-element strain energy density factors u_e^T k0 u_e (modulus excluded)."""
    k0 = element_stiffness(nu)
    ue = state.u[mesh.elem_dofs]
    return np.einsum("ni,ij,nj->n", ue, k0, ue)


def compliance_sensitivities(mesh: MeshModel, law, rho, state: ElasticState) -> np.ndarray:
    """d compliance / d rho_e = -dE/drho * u_e^T k0 u_e, self-adjoint form.

    Never positive: the quadratic form is nonnegative and the modulus is
    nondecreasing in density.  rho must be the physical density field the
    state was solved for.
    """
    from .material import modulus_derivative

    values = getattr(rho, "values", rho)
    return -modulus_derivative(law, values) * element_compliances(mesh, state, law.nu)
