"""Neighborhood-based regularization of density fields and sensitivities.

All filters share one geometric ingredient: for each element e the set
N_e = {i : ||x_i - x_e|| <= r} of elements whose centers lie within radius r,
with either linear (hat) weights w = r - d or constant weights w = 1.  On the
structured grid the neighborhood pattern is a fixed stencil of index offsets,
clipped at the domain boundary.

Available filter kinds:

- sensitivity: rescales compliance gradients in place of the raw ones
  (heuristic, no design-variable transformation),
- density: linear map rho_phys = A rho with row-stochastic A,
- heaviside: density filter followed by a smooth projection toward 0/1,
- erode / dilate: nonlinear morphology-flavored means over the neighborhood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import MeshModel

FILTER_KINDS = ("none", "sensitivity", "density", "heaviside", "erode", "dilate")
WEIGHTINGS = ("linear", "constant")
MEANS = ("arithmetic", "geometric", "harmonic")

# Stabilizer for the sensitivity-filter denominator at near-zero density.
GAMMA_S = 1e-3


@dataclass(frozen=True)
class FilterSpec:
    """Which filter to apply and its parameters.

    r is the neighborhood radius in physical length units.  epsilon only
    matters for the geometric and harmonic erode/dilate means, where it
    shifts densities away from zero before taking logs or reciprocals.
    beta is the Heaviside projection sharpness; beta = 0 reduces the
    projection to the identity, recovering the plain density filter.
    """

    kind: str = "none"
    r: float = 0.0
    weighting: str = "linear"
    beta: float = 0.0
    mean: str = "arithmetic"
    epsilon: float = 1e-3

    def __post_init__(self) -> None:
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.mean not in MEANS:
            raise ValueError(f"unknown mean {self.mean!r}")
        if self.kind != "none" and not self.r > 0.0:
            raise ValueError(f"filter radius must be positive, got {self.r}")
        if not self.beta >= 0.0:
            raise ValueError(f"projection sharpness must be >= 0, got {self.beta}")
        if self.kind in ("erode", "dilate") and self.mean in ("geometric", "harmonic"):
            if not self.epsilon > 0.0:
                raise ValueError(
                    f"{self.mean} mean requires a positive epsilon, got {self.epsilon}"
                )


@dataclass
class NeighborhoodTable:
    """CSR-style neighbor lists: element e owns entries indptr[e]:indptr[e+1].

    indices holds neighbor element ids, weights the corresponding geometric
    weights, and rows the center element of each entry (the expanded CSR row
    index, convenient for segment reductions).  elem_volumes is the per-element
    volume vector of the generating mesh.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    rows: np.ndarray
    elem_volumes: np.ndarray

    def __post_init__(self) -> None:
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have n+1 entries")
        if self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise ValueError("indptr endpoints inconsistent with indices")
        if self.indices.shape != self.weights.shape != self.rows.shape:
            raise ValueError("indices, weights, rows must be aligned")
        if self.weights.size and self.weights.min() < 0.0:
            raise ValueError("negative neighborhood weight")
        if self.elem_volumes.shape != (self.n,):
            raise ValueError("need one volume per element")

    def neighbor_counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def weight_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.weights, minlength=self.n)


def build_neighborhoods(mesh: MeshModel, spec: FilterSpec) -> NeighborhoodTable:
    """Enumerate within-radius element pairs on the structured grid.

    Membership uses the exact condition ||x_i - x_e|| <= r on center
    distances, so a radius equal to h includes the 4 edge neighbors with
    zero linear weight.  The stencil is translation invariant; only the
    boundary clipping varies between elements.
    """
    if spec.kind == "none":
        raise ValueError("no neighborhoods to build for filter kind 'none'")
    nx, ny, h = mesh.nx, mesh.ny, mesh.h
    m = int(np.floor(spec.r / h + 1e-12))
    offsets = []
    for dy in range(-m, m + 1):
        for dx in range(-m, m + 1):
            d = h * float(np.hypot(dx, dy))
            if d <= spec.r:
                w = spec.r - d if spec.weighting == "linear" else 1.0
                offsets.append((dx, dy, w))

    centers, neighbors, weights = [], [], []
    for dx, dy, w in offsets:
        ex_lo, ex_hi = max(0, -dx), min(nx - 1, nx - 1 - dx)
        ey_lo, ey_hi = max(0, -dy), min(ny - 1, ny - 1 - dy)
        if ex_lo > ex_hi or ey_lo > ey_hi:
            continue
        ex = np.arange(ex_lo, ex_hi + 1)
        ey = np.arange(ey_lo, ey_hi + 1)
        exg, eyg = np.meshgrid(ex, ey, indexing="xy")
        e = (eyg * nx + exg).ravel()
        nb = ((eyg + dy) * nx + (exg + dx)).ravel()
        centers.append(e)
        neighbors.append(nb)
        weights.append(np.full(e.size, w))

    rows = np.concatenate(centers)
    indices = np.concatenate(neighbors)
    wvals = np.concatenate(weights)
    order = np.lexsort((indices, rows))
    rows, indices, wvals = rows[order], indices[order], wvals[order]
    counts = np.bincount(rows, minlength=nx * ny)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return NeighborhoodTable(
        n=nx * ny,
        indptr=indptr.astype(int),
        indices=indices.astype(int),
        weights=wvals,
        rows=rows.astype(int),
        elem_volumes=mesh.elem_volumes.copy(),
    )


def filter_sensitivities(
    table: NeighborhoodTable,
    rho: np.ndarray,
    grad: np.ndarray,
    gamma: float = GAMMA_S,
) -> np.ndarray:
    """Density-weighted neighborhood average of compliance sensitivities.

    filtered_e = [sum_i w_i rho_i g_i / v_i] / [(max(rho_e, gamma)/v_e) sum_i w_i]

    The gamma floor keeps the division benign where the density vanishes.
    The result replaces the raw gradient in the update step; there is no
    corresponding change of variables.
    """
    rho = np.asarray(rho, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if rho.shape != (table.n,) or grad.shape != (table.n,):
        raise ValueError("rho and grad must have one entry per element")
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    v = table.elem_volumes
    contrib = table.weights * rho[table.indices] * grad[table.indices] / v[table.indices]
    numer = np.bincount(table.rows, weights=contrib, minlength=table.n)
    denom = np.maximum(rho, gamma) / v * table.weight_sums()
    return numer / denom


def build_filter_matrix(table: NeighborhoodTable) -> sp.csr_matrix:
    """Row-stochastic density filter matrix A[e, i] = w_e(x_i) v_i / sum_j w_e(x_j) v_j."""
    wv = table.weights * table.elem_volumes[table.indices]
    row_sums = np.bincount(table.rows, weights=wv, minlength=table.n)
    vals = wv / row_sums[table.rows]
    return sp.csr_matrix(
        (vals, table.indices.copy(), table.indptr.copy()), shape=(table.n, table.n)
    )


def apply_density_filter(A: sp.spmatrix, rho: np.ndarray) -> np.ndarray:
    """rho_phys = A rho, clipped against rounding drift outside [0, 1]."""
    rho = np.asarray(rho, dtype=float)
    return np.clip(A @ rho, 0.0, 1.0)


def density_filter_chain_rule(A: sp.spmatrix, grad_phys: np.ndarray) -> np.ndarray:
    """Pull a gradient with respect to filtered densities back to design space."""
    return A.T @ np.asarray(grad_phys, dtype=float)


def heaviside_project(rho: np.ndarray, beta: float) -> np.ndarray:
    """Smooth threshold rho_bar = 1 - exp(-beta rho) + rho exp(-beta).

    Fixes the endpoints 0 and 1 for every beta, reduces to the identity at
    beta = 0, and approaches a step at large beta.
    """
    if not beta >= 0.0:
        raise ValueError(f"projection sharpness must be >= 0, got {beta}")
    rho = np.asarray(rho, dtype=float)
    return np.clip(1.0 - np.exp(-beta * rho) + rho * np.exp(-beta), 0.0, 1.0)


def heaviside_chain_rule(
    rho: np.ndarray, beta: float, grad_projected: np.ndarray
) -> np.ndarray:
    """Pull a gradient through the smooth threshold evaluated at rho.

    The projection acts elementwise, so the chain rule is a pointwise scaling
    by d rho_bar / d rho = beta exp(-beta rho) + exp(-beta), which is positive
    for every beta >= 0 (the projection never flips gradient signs).
    """
    if not beta >= 0.0:
        raise ValueError(f"projection sharpness must be >= 0, got {beta}")
    rho = np.asarray(rho, dtype=float)
    grad_projected = np.asarray(grad_projected, dtype=float)
    if rho.shape != grad_projected.shape:
        raise ValueError("rho and gradient must have matching shapes")
    return (beta * np.exp(-beta * rho) + np.exp(-beta)) * grad_projected


def _weighted_mean(table: NeighborhoodTable, values: np.ndarray, mean: str, eps: float):
    """Neighborhood mean of values in [0, 1] using plain geometric weights."""
    w = table.weights
    wsum = table.weight_sums()
    vals = values[table.indices]
    if mean == "arithmetic":
        return np.bincount(table.rows, weights=w * vals, minlength=table.n) / wsum
    if mean == "geometric":
        logs = np.bincount(
            table.rows, weights=w * np.log(vals + eps), minlength=table.n
        )
        return np.exp(logs / wsum) - eps
    # harmonic
    recip = np.bincount(table.rows, weights=w / (vals + eps), minlength=table.n)
    return wsum / recip - eps


def erode_dilate(table: NeighborhoodTable, rho: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Morphology-flavored filtering: erode pulls toward void, dilate toward solid.

    Erosion takes a weighted mean over the neighborhood (the geometric and
    harmonic means weight low densities heavily, approaching a true morphological
    erosion); dilation is its dual, dilate(rho) = 1 - erode(1 - rho).  Dilation
    built this way is convex in rho along segments, a property the diagnostics
    module can probe directly.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (table.n,):
        raise ValueError("rho must have one entry per element")
    if spec.kind == "erode":
        out = _weighted_mean(table, rho, spec.mean, spec.epsilon)
    elif spec.kind == "dilate":
        out = 1.0 - _weighted_mean(table, 1.0 - rho, spec.mean, spec.epsilon)
    else:
        raise ValueError(f"filter kind {spec.kind!r} is not erode or dilate")
    return np.clip(out, 0.0, 1.0)


def _mean_jacobian_entries(
    table: NeighborhoodTable, values: np.ndarray, mean: str, eps: float
) -> np.ndarray:
    """d mean_e / d values_i for each table entry (e, i)."""
    w = table.weights
    wsum = table.weight_sums()
    vals = values[table.indices]
    if mean == "arithmetic":
        return w / wsum[table.rows]
    if mean == "geometric":
        logs = np.bincount(
            table.rows, weights=w * np.log(vals + eps), minlength=table.n
        )
        mean_val = np.exp(logs / wsum)
        return mean_val[table.rows] * w / (wsum[table.rows] * (vals + eps))
    # harmonic: mean + eps = wsum / T with T = sum_i w_i/(vals_i + eps)
    T = np.bincount(table.rows, weights=w / (vals + eps), minlength=table.n)
    return (wsum / T**2)[table.rows] * w / (vals + eps) ** 2


def erode_dilate_chain_rule(
    table: NeighborhoodTable,
    rho: np.ndarray,
    spec: FilterSpec,
    grad_phys: np.ndarray,
) -> np.ndarray:
    """Pull a gradient through erode/dilate: returns J^T grad at the given rho."""
    rho = np.asarray(rho, dtype=float)
    grad_phys = np.asarray(grad_phys, dtype=float)
    if rho.shape != (table.n,) or grad_phys.shape != (table.n,):
        raise ValueError("rho and grad must have one entry per element")
    if spec.kind == "erode":
        entries = _mean_jacobian_entries(table, rho, spec.mean, spec.epsilon)
    elif spec.kind == "dilate":
        # dilate_e(rho) = 1 - erode_e(1 - rho); the two sign flips cancel
        entries = _mean_jacobian_entries(table, 1.0 - rho, spec.mean, spec.epsilon)
    else:
        raise ValueError(f"filter kind {spec.kind!r} is not erode or dilate")
    return np.bincount(
        table.indices, weights=entries * grad_phys[table.rows], minlength=table.n
    )


@dataclass
class FilterMatrixReport:
    """Numerical rank structure of a density filter matrix."""

    n: int
    rank: int
    min_singular_value: float
    duplicate_row_pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def invertible(self) -> bool:
        return self.rank == self.n


def filter_matrix_invertibility_check(A: sp.spmatrix) -> FilterMatrixReport:
    """Dense SVD rank check plus detection of coincident rows.

    Coincident rows arise when two elements share the same neighborhood with
    the same weights (e.g. constant weighting on a strip narrower than the
    stencil), which makes the filtered field blind to swaps between them.
    Dense decomposition: intended for moderate problem sizes.
    """
    dense = np.asarray(A.todense() if sp.issparse(A) else A, dtype=float)
    n = dense.shape[0]
    if dense.shape != (n, n):
        raise ValueError("filter matrix must be square")
    svals = np.linalg.svd(dense, compute_uv=False)
    tol = svals[0] * n * np.finfo(float).eps if svals.size else 0.0
    rank = int((svals > tol).sum())
    rounded = np.round(dense, 12)
    _, inverse, counts = np.unique(
        rounded, axis=0, return_inverse=True, return_counts=True
    )
    pairs: list[tuple[int, int]] = []
    for group in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inverse == group)
        pairs.extend(
            (int(a), int(b)) for k, a in enumerate(members) for b in members[k + 1 :]
        )
    return FilterMatrixReport(
        n=n,
        rank=rank,
        min_singular_value=float(svals[-1]) if svals.size else 0.0,
        duplicate_row_pairs=sorted(pairs),
    )
