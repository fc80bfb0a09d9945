"""Executable probes for structural claims about the optimization landscape.

Samples convexity and quasiconvexity inequalities along segments between
feasible designs, checks that filtered gradients remain descent directions,
quantifies gray level and checkerboarding, and compares independent runs
after projecting each design to its nearest volume-feasible binary field.
Sampling probes can falsify a property; they never certify it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .material import MaterialLaw
from .mesh import MeshModel, assemble_and_solve, compliance

if TYPE_CHECKING:
    from .optimizer import RunRecord

PROBE_PROPERTIES = ("convex", "quasiconvex", "strictly_quasiconvex", "unimodal_ray")

# Violation threshold, relative to max(|f(x1)|, |f(x2)|); FE solves carry
# residual noise around 1e-10 so anything tighter would chase rounding.
PROBE_TOL = 1e-9


@dataclass
class ProbeReport:
    """Outcome of sampling one of the segment inequalities.

    gap entries are signed and relative: positive means the inequality was
    violated by that margin at the recorded (pair, lambda); max_gap is the
    largest gap seen anywhere, violated or not.  alpha is the level-set
    threshold max(f(x1), f(x2)) for the quasiconvex properties of a single
    pair, and None otherwise.
    """

    property_name: str
    pairs_tested: int
    samples: int
    tolerance: float
    violations: list[tuple[int, float, float]] = field(default_factory=list)
    max_gap: float = -np.inf
    alpha: float | None = None

    @property
    def passed(self) -> bool:
        return not self.violations


def descent_direction_check(
    grad_original: np.ndarray, grad_filtered: np.ndarray
) -> float:
    """Dot product of raw and filtered gradients; nonpositive means the
    filtered direction is not a descent direction for the raw objective."""
    grad_original = np.asarray(grad_original, dtype=float)
    grad_filtered = np.asarray(grad_filtered, dtype=float)
    if grad_original.shape != grad_filtered.shape:
        raise ValueError("gradient vectors must have equal length")
    return float(grad_original @ grad_filtered)


def _lambda_grid(samples: int) -> np.ndarray:
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    return np.arange(1, samples + 1) / (samples + 1)


def convexity_probe(
    objective: Callable[[np.ndarray], float],
    x1: np.ndarray,
    x2: np.ndarray,
    property_name: str = "convex",
    samples: int = 9,
    tolerance: float = PROBE_TOL,
) -> ProbeReport:
    """Sample a segment inequality for one pair of feasible designs.

    convex:                f(lam x1 + (1-lam) x2) <= lam f(x1) + (1-lam) f(x2)
    quasiconvex:           f(mid) <= max(f(x1), f(x2))
    strictly_quasiconvex:  f(mid) <  max(f(x1), f(x2)), requires f(x1) != f(x2)
    unimodal_ray:          f nondecreasing along x1 -> x2, x1 the candidate min

    The lambda grid is uniform in (0, 1).  Gaps are normalized by
    max(|f(x1)|, |f(x2)|), so `tolerance` is relative.
    """
    report = probe_pairs(
        objective, [(x1, x2)], property_name, samples, tolerance
    )
    if property_name in ("quasiconvex", "strictly_quasiconvex"):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        report.alpha = max(float(objective(x1)), float(objective(x2)))
    return report


def probe_pairs(
    objective: Callable[[np.ndarray], float],
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    property_name: str = "convex",
    samples: int = 9,
    tolerance: float = PROBE_TOL,
) -> ProbeReport:
    """Run convexity_probe over many pairs and pool the violations."""
    if property_name not in PROBE_PROPERTIES:
        raise ValueError(f"unknown probe property {property_name!r}")
    report = ProbeReport(
        property_name=property_name,
        pairs_tested=len(pairs),
        samples=samples,
        tolerance=tolerance,
    )
    lams = _lambda_grid(samples)
    for pair_id, (x1, x2) in enumerate(pairs):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        for x in (x1, x2):
            if x.size and (x.min() < -1e-12 or x.max() > 1.0 + 1e-12):
                raise ValueError("probe endpoints must satisfy the box constraints")
        f1 = float(objective(x1))
        f2 = float(objective(x2))
        scale = max(abs(f1), abs(f2), np.finfo(float).tiny)
        if property_name == "strictly_quasiconvex" and f1 == f2:
            raise ValueError(
                "strict quasiconvexity needs endpoints with distinct values"
            )
        if property_name == "unimodal_ray":
            # walk from the candidate minimum outward; each step may not
            # decrease the objective beyond tolerance
            prev = f1
            for lam in lams:
                val = float(objective(x1 + lam * (x2 - x1)))
                gap = (prev - val) / scale
                report.max_gap = max(report.max_gap, gap)
                if gap > tolerance:
                    report.violations.append((pair_id, float(lam), gap))
                prev = val
            gap = (prev - f2) / scale
            report.max_gap = max(report.max_gap, gap)
            if gap > tolerance:
                report.violations.append((pair_id, 1.0, gap))
            continue
        for lam in lams:
            mid = float(objective(lam * x1 + (1.0 - lam) * x2))
            if property_name == "convex":
                bound = lam * f1 + (1.0 - lam) * f2
                gap = (mid - bound) / scale
            elif property_name == "quasiconvex":
                gap = (mid - max(f1, f2)) / scale
            else:
                # strictly_quasiconvex: the strict inequality must hold with a
                # margin of tolerance*scale, so shift the gap by 2*tolerance
                gap = (mid - max(f1, f2)) / scale + 2.0 * tolerance
            report.max_gap = max(report.max_gap, gap)
            if gap > tolerance:
                report.violations.append((pair_id, float(lam), gap))
    return report


def discreteness_measure(rho: np.ndarray) -> float:
    """Gray-level percentage, mean of 4 rho (1 - rho) times 100.

    0 for a binary field, 100 for a field stuck at 0.5.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.size and (rho.min() < 0.0 or rho.max() > 1.0):
        raise ValueError("densities must lie in [0, 1]")
    return float(np.mean(4.0 * rho * (1.0 - rho)) * 100.0)


def checkerboard_index(mesh: MeshModel, rho: np.ndarray) -> float:
    """Mean absolute response to the 2x2 alternating kernel, scaled to [0, 1].

    The kernel [[+1, -1], [-1, +1]]/4 slides over all (nx-1)(ny-1) patches;
    the factor 2 makes a perfect 0/1 checkerboard score exactly 1 while
    uniform fields and single-width stripes score 0.
    """
    if mesh.nx < 2 or mesh.ny < 2:
        raise ValueError("checkerboard index needs at least a 2x2 element grid")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.n_elems,):
        raise ValueError("rho must have one entry per element")
    g = rho.reshape(mesh.ny, mesh.nx)
    resp = (g[:-1, :-1] - g[:-1, 1:] - g[1:, :-1] + g[1:, 1:]) / 4.0
    return float(2.0 * np.mean(np.abs(resp)))


def threshold_project(
    rho: np.ndarray, volumes: np.ndarray, vf_target: float
) -> np.ndarray:
    """Nearest volume-feasible binary design under the sort order.

    Elements are ranked by density descending with index ascending as the
    tie-break; the longest prefix whose volume stays within vf_target * V0
    becomes solid.
    """
    if not 0.0 < vf_target <= 1.0:
        raise ValueError(f"volume fraction must lie in (0, 1], got {vf_target}")
    rho = np.asarray(rho, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if rho.shape != volumes.shape:
        raise ValueError("rho and volumes must have equal length")
    order = np.lexsort((np.arange(rho.size), -rho))
    budget = vf_target * volumes.sum()
    cum = np.cumsum(volumes[order])
    keep = cum <= budget * (1.0 + 1e-12)
    out = np.zeros_like(rho)
    out[order[keep]] = 1.0
    return out


@dataclass
class RunSummary:
    """One run's final-state row in a comparison table."""

    label: str
    iterations: int
    compliance: float
    compliance_thresholded: float
    discreteness: float
    checkerboard: float
    volume_fraction_thresholded: float


@dataclass
class PairGap:
    """Relative compliance gap |c_i - c_j| / min(c_i, c_j) for one run pair."""

    label_a: str
    label_b: str
    gap_raw: float
    gap_thresholded: float


@dataclass
class ComparisonTable:
    runs: list[RunSummary]
    pairs: list[PairGap]

    def max_gap_thresholded(self) -> float:
        return max((p.gap_thresholded for p in self.pairs), default=0.0)

    def max_gap_raw(self) -> float:
        return max((p.gap_raw for p in self.pairs), default=0.0)


def compare_runs(records: Sequence["RunRecord"]) -> ComparisonTable:
    """Compare final designs of runs that share a mesh and volume budget.

    Raw compliances are read from the records; thresholded compliances come
    from fresh solves on each design projected to binary (so designs trained
    at different p values are compared on equal footing, the binary design's
    stiffness being independent of p).
    """
    if not records:
        raise ValueError("need at least one record to compare")
    first = records[0]
    for rec in records[1:]:
        same_mesh = (
            rec.mesh.nx == first.mesh.nx
            and rec.mesh.ny == first.mesh.ny
            and rec.mesh.h == first.mesh.h
            and rec.mesh.preset == first.mesh.preset
        )
        if not same_mesh or rec.vf_target != first.vf_target:
            raise ValueError("records do not share mesh and volume fraction")
    runs: list[RunSummary] = []
    thresholded_c: list[float] = []
    for rec in records:
        binary = threshold_project(
            rec.final_rho_phys, rec.mesh.elem_volumes, rec.vf_target
        )
        law = rec.law
        moduli = law.Emin + binary * (law.E0 - law.Emin)
        state = assemble_and_solve(rec.mesh, moduli, law.nu)
        c_thr = compliance(state)
        thresholded_c.append(c_thr)
        runs.append(
            RunSummary(
                label=rec.label,
                iterations=len(rec.history),
                compliance=rec.final_compliance,
                compliance_thresholded=c_thr,
                discreteness=discreteness_measure(rec.final_rho_phys),
                # thin grids have no 2x2 patches; report NaN like the run history
                checkerboard=(
                    np.nan
                    if rec.mesh.nx < 2 or rec.mesh.ny < 2
                    else checkerboard_index(rec.mesh, rec.final_rho_phys)
                ),
                volume_fraction_thresholded=float(
                    rec.mesh.elem_volumes @ binary / rec.mesh.total_volume
                ),
            )
        )
    pairs: list[PairGap] = []
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            ci, cj = records[i].final_compliance, records[j].final_compliance
            ti, tj = thresholded_c[i], thresholded_c[j]
            pairs.append(
                PairGap(
                    label_a=records[i].label,
                    label_b=records[j].label,
                    gap_raw=abs(ci - cj) / min(ci, cj),
                    gap_thresholded=abs(ti - tj) / min(ti, tj),
                )
            )
    return ComparisonTable(runs=runs, pairs=pairs)
