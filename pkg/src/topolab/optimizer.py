"""Optimality Criteria updates, the nested analysis/design loop, and
continuation over the penalization exponent and projection sharpness.

The loop is the nested formulation: every iteration solves the equilibrium
system exactly for the current design, evaluates compliance and its
sensitivities, passes them through the configured filter chain, checks that
the filtered direction still points downhill, and applies the OC update with
the volume constraint treated as active.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import checkerboard_index, descent_direction_check, discreteness_measure
from .filters import (
    FilterSpec,
    NeighborhoodTable,
    apply_density_filter,
    build_filter_matrix,
    build_neighborhoods,
    density_filter_chain_rule,
    erode_dilate,
    erode_dilate_chain_rule,
    filter_sensitivities,
    heaviside_chain_rule,
    heaviside_project,
)
from .material import DesignField, MaterialLaw, interpolate_modulus
from .mesh import MeshModel, assemble_and_solve, compliance, compliance_sensitivities

# Conventional projection ramp for heaviside runs; configs must opt in to a
# beta schedule explicitly, this constant just names the usual choice.
DEFAULT_BETA_STAGES = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0)


class OcBracketError(RuntimeError):
    """The multiplier bracket failed to enclose the volume target."""


class AscentDirectionError(RuntimeError):
    """A filtered gradient stopped being a descent direction for compliance."""


@dataclass(frozen=True)
class OcSettings:
    """Constants of the Optimality Criteria update."""

    move_limit: float = 0.2
    damping: float = 0.5
    bisection_tol: float = 1e-9
    lambda_bracket: tuple[float, float] = (1e-9, 1e9)

    def __post_init__(self) -> None:
        # move_limit 0 is allowed as a degenerate no-op update (only valid on
        # an already-feasible design; anything else fails the volume bracket)
        if not 0.0 <= self.move_limit <= 1.0:
            raise ValueError(f"move limit must lie in [0, 1], got {self.move_limit}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.bisection_tol > 0.0:
            raise ValueError("bisection tolerance must be positive")
        lo, hi = self.lambda_bracket
        if not 0.0 < lo < hi:
            raise ValueError(f"need 0 < bracket lo < hi, got {self.lambda_bracket}")


@dataclass(frozen=True)
class ContinuationSchedule:
    """Staged (p, beta) sequence with per-stage convergence control.

    The beta ramp starts only after the p stages are exhausted: stages are
    (p_0, beta_0), ..., (p_last, beta_0), (p_last, beta_1), ...  Raising the
    projection sharpness while the objective penalization is still moving
    tends to destabilize the iteration, hence the sequential policy.

    A schedule with several p stages must start at p = 1 (solve the convex
    relaxation first); a single-stage schedule may sit at any p >= 1, which
    is the direct, non-continuation run.
    """

    p_stages: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0)
    beta_stages: tuple[float, ...] = (0.0,)
    stage_convergence_tol: float = 0.01
    stage_max_iters: int = 200

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_stages", tuple(float(p) for p in self.p_stages))
        object.__setattr__(
            self, "beta_stages", tuple(float(b) for b in self.beta_stages)
        )
        if not self.p_stages:
            raise ValueError("need at least one p stage")
        if any(p < 1.0 for p in self.p_stages):
            raise ValueError("penalization exponents must be >= 1")
        if any(b < 0.0 for b in self.beta_stages):
            raise ValueError("beta values must be >= 0")
        if not self.beta_stages:
            raise ValueError("need at least one beta stage")
        if list(self.p_stages) != sorted(self.p_stages):
            raise ValueError("p stages must be nondecreasing")
        if list(self.beta_stages) != sorted(self.beta_stages):
            raise ValueError("beta stages must be nondecreasing")
        if len(self.p_stages) > 1 and self.p_stages[0] != 1.0:
            raise ValueError("a continuation schedule must start at p = 1")
        if not self.stage_convergence_tol > 0.0:
            raise ValueError("stage convergence tolerance must be positive")
        if self.stage_max_iters < 1:
            raise ValueError("stage iteration cap must be at least 1")

    def stages(self) -> list[tuple[float, float]]:
        """Flattened (p, beta) sequence the run iterates through."""
        out = [(p, self.beta_stages[0]) for p in self.p_stages]
        out += [(self.p_stages[-1], b) for b in self.beta_stages[1:]]
        return out


def continuation_advance(
    schedule: ContinuationSchedule, stage_index: int
) -> tuple[float, float] | None:
    """(p, beta) of the stage after stage_index, or None when finished."""
    stages = schedule.stages()
    if not 0 <= stage_index < len(stages):
        raise ValueError(f"stage index {stage_index} out of range")
    if stage_index + 1 < len(stages):
        return stages[stage_index + 1]
    return None


def oc_candidate(
    rho: np.ndarray,
    grad: np.ndarray,
    volumes: np.ndarray,
    lam: float,
    settings: OcSettings,
) -> np.ndarray:
    """Damped multiplicative OC step at a fixed multiplier, move-limited and boxed."""
    step = rho * (-grad / (lam * volumes)) ** settings.damping
    lower = np.maximum(0.0, rho - settings.move_limit)
    upper = np.minimum(1.0, rho + settings.move_limit)
    return np.clip(step, lower, upper)


def oc_update(
    rho: np.ndarray,
    grad: np.ndarray,
    volumes: np.ndarray,
    vf_target: float,
    settings: OcSettings = OcSettings(),
) -> tuple[np.ndarray, float]:
    """One OC design update; returns the new design and the multiplier found.

    The volume constraint is treated as an equality: the Lagrange multiplier
    is bisected until the updated design hits vf_target to the configured
    relative tolerance.  The initial bracket is doubled outward (at most 100
    times each way) until it encloses the target volume.
    """
    rho = np.asarray(rho, dtype=float)
    grad = np.asarray(grad, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if not rho.shape == grad.shape == volumes.shape:
        raise ValueError("rho, grad, volumes must have equal length")
    if not 0.0 < vf_target < 1.0:
        raise ValueError(f"volume fraction must lie in (0, 1), got {vf_target}")
    if grad.size and grad.max() > 0.0:
        bad = int(np.argmax(grad))
        raise ValueError(
            f"positive compliance sensitivity at element {bad} "
            f"({grad[bad]:.3e}); upstream filter or physics bug"
        )
    v_total = volumes.sum()
    target = vf_target * v_total

    def volume_at(lam: float) -> float:
        return float(volumes @ oc_candidate(rho, grad, volumes, lam, settings))

    lo, hi = settings.lambda_bracket
    for _ in range(100):
        if volume_at(lo) >= target:
            break
        lo /= 2.0
    else:
        raise OcBracketError(
            "no multiplier reaches the volume target from above; "
            "the move limit may make the target infeasible"
        )
    for _ in range(100):
        if volume_at(hi) <= target:
            break
        hi *= 2.0
    else:
        raise OcBracketError(
            "no multiplier reaches the volume target from below; "
            "the move limit may make the target infeasible"
        )
    for _ in range(300):
        lam = 0.5 * (lo + hi)
        rho_new = oc_candidate(rho, grad, volumes, lam, settings)
        vf = float(volumes @ rho_new) / v_total
        if abs(vf - vf_target) <= settings.bisection_tol * vf_target:
            return rho_new, lam
        if vf > vf_target:
            lo = lam
        else:
            hi = lam
    raise OcBracketError("volume bisection failed to converge")


@dataclass
class IterationRow:
    """One line of a run's history.

    compliance, discreteness and checkerboard describe the design the
    iteration analyzed; volume_fraction, max_change and lam describe the
    update it produced.  sign_flips counts elements whose raw and filtered
    sensitivities disagree in sign (diagnostic for the descent check).
    """

    iteration: int
    stage: int
    p: float
    beta: float
    compliance: float
    volume_fraction: float
    max_change: float
    lam: float
    descent_dot: float
    sign_flips: int
    discreteness: float
    checkerboard: float


@dataclass
class StageResult:
    index: int
    p: float
    beta: float
    iterations: int
    converged: bool


@dataclass
class RunRecord:
    """Everything needed to audit or compare a finished run."""

    label: str
    mesh: MeshModel
    law: MaterialLaw
    vf_target: float
    filter_spec: FilterSpec
    schedule: ContinuationSchedule
    settings: OcSettings
    initial_mode: str
    seed: int | None
    history: list[IterationRow] = field(default_factory=list)
    stage_results: list[StageResult] = field(default_factory=list)
    final_rho: np.ndarray | None = None
    final_rho_phys: np.ndarray | None = None
    final_compliance: float = np.nan

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.stage_results)


class FilterPipeline:
    """Maps design variables to physical densities and gradients back.

    The 'sensitivity' kind is the odd one out: it leaves densities untouched
    and instead rescales the gradient heuristically, so it has no chain rule.
    """

    def __init__(self, mesh: MeshModel, spec: FilterSpec):
        self.spec = spec
        self.table: NeighborhoodTable | None = None
        self.matrix = None
        if spec.kind != "none":
            self.table = build_neighborhoods(mesh, spec)
        if spec.kind in ("density", "heaviside"):
            self.matrix = build_filter_matrix(self.table)

    def physical(self, rho: np.ndarray, beta: float) -> np.ndarray:
        kind = self.spec.kind
        if kind in ("none", "sensitivity"):
            return rho
        if kind == "density":
            return apply_density_filter(self.matrix, rho)
        if kind == "heaviside":
            return heaviside_project(apply_density_filter(self.matrix, rho), beta)
        return erode_dilate(self.table, rho, self.spec)

    def update_gradient(
        self, rho: np.ndarray, beta: float, grad_phys: np.ndarray
    ) -> np.ndarray:
        """Gradient driving the OC update, in design-variable space."""
        kind = self.spec.kind
        if kind == "none":
            return grad_phys
        if kind == "sensitivity":
            return filter_sensitivities(self.table, rho, grad_phys)
        if kind == "density":
            return density_filter_chain_rule(self.matrix, grad_phys)
        if kind == "heaviside":
            rho_tilde = apply_density_filter(self.matrix, rho)
            return density_filter_chain_rule(
                self.matrix, heaviside_chain_rule(rho_tilde, beta, grad_phys)
            )
        return erode_dilate_chain_rule(self.table, rho, self.spec, grad_phys)


def run_optimization(
    mesh: MeshModel,
    law: MaterialLaw,
    initial: DesignField,
    filter_spec: FilterSpec = FilterSpec(),
    schedule: ContinuationSchedule = ContinuationSchedule(),
    settings: OcSettings = OcSettings(),
    vf_target: float | None = None,
    label: str = "run",
    initial_mode: str = "given",
    seed: int | None = None,
) -> tuple[DesignField, RunRecord]:
    """Run the nested compliance-minimization loop through all stages.

    The volume target defaults to the initial field's volume fraction (the
    constraint is active throughout, so feasible initial guesses define it).
    The penalization exponent of `law` is overridden stage by stage from the
    schedule.  Non-converged stages are recorded, not raised; physics and
    filter errors propagate.
    """
    rho = initial.values.copy()
    if rho.shape != (mesh.n_elems,):
        raise ValueError("initial field does not match the mesh")
    volumes = mesh.elem_volumes
    if vf_target is None:
        vf_target = float(volumes @ rho / volumes.sum())
    record = RunRecord(
        label=label,
        mesh=mesh,
        law=law,
        vf_target=vf_target,
        filter_spec=filter_spec,
        schedule=schedule,
        settings=settings,
        initial_mode=initial_mode,
        seed=seed,
    )
    pipeline = FilterPipeline(mesh, filter_spec)
    small_grid = mesh.nx < 2 or mesh.ny < 2
    iteration = 0
    for stage_idx, (p, beta) in enumerate(schedule.stages()):
        law_stage = replace(law, p=p)
        converged = False
        stage_iters = 0
        while stage_iters < schedule.stage_max_iters:
            stage_iters += 1
            iteration += 1
            rho_phys = pipeline.physical(rho, beta)
            moduli = interpolate_modulus(law_stage, rho_phys)
            state = assemble_and_solve(mesh, moduli, law_stage.nu)
            c = compliance(state)
            grad_phys = compliance_sensitivities(mesh, law_stage, rho_phys, state)
            grad_update = pipeline.update_gradient(rho, beta, grad_phys)
            dot = descent_direction_check(grad_phys, grad_update)
            sign_flips = int(np.count_nonzero(grad_phys * grad_update < 0.0))
            if not dot > 0.0:
                raise AscentDirectionError(
                    f"{label}: filtered gradient is not a descent direction at "
                    f"iteration {iteration} (dot={dot:.6e}, "
                    f"{sign_flips} sign flips)"
                )
            rho_new, lam = oc_update(rho, grad_update, volumes, vf_target, settings)
            max_change = float(np.max(np.abs(rho_new - rho)))
            record.history.append(
                IterationRow(
                    iteration=iteration,
                    stage=stage_idx,
                    p=p,
                    beta=beta,
                    compliance=c,
                    volume_fraction=float(volumes @ rho_new / volumes.sum()),
                    max_change=max_change,
                    lam=lam,
                    descent_dot=dot,
                    sign_flips=sign_flips,
                    discreteness=discreteness_measure(rho_phys),
                    checkerboard=(
                        np.nan if small_grid else checkerboard_index(mesh, rho_phys)
                    ),
                )
            )
            rho = rho_new
            if max_change < schedule.stage_convergence_tol:
                converged = True
                break
        record.stage_results.append(
            StageResult(
                index=stage_idx, p=p, beta=beta, iterations=stage_iters, converged=converged
            )
        )
    p_last, beta_last = schedule.stages()[-1]
    rho_phys = pipeline.physical(rho, beta_last)
    law_final = replace(law, p=p_last)
    state = assemble_and_solve(
        mesh, interpolate_modulus(law_final, rho_phys), law_final.nu
    )
    record.final_rho = rho.copy()
    record.final_rho_phys = rho_phys.copy()
    record.final_compliance = compliance(state)
    return DesignField(values=rho, nx=mesh.nx, ny=mesh.ny), record
