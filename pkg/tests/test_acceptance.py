"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (echoed again in the terminal
summary) with the measured quantity, then asserts it.  Expensive run sets
are shared through module-scoped fixtures; criterion 5 audits the descent
diagnostics of every run criteria 1-4 produced.
"""

import time

import numpy as np
import pytest

from topolab import (
    ContinuationSchedule,
    DesignField,
    FilterSpec,
    MaterialLaw,
    apply_density_filter,
    build_filter_matrix,
    build_mesh,
    build_neighborhoods,
    compare_runs,
    discreteness_measure,
    erode_dilate,
    filter_matrix_invertibility_check,
    heaviside_chain_rule,
    heaviside_project,
    interpolate_modulus,
    probe_pairs,
    run_optimization,
    splitmix64_uniform,
)
from topolab.diagnostics import checkerboard_index
from topolab.mesh import assemble_and_solve, compliance, compliance_sensitivities
from topolab.optimizer import FilterPipeline
from topolab.sampling import random_feasible_field

REPORT: list[str] = []


def _record(num: int, name: str, ok: bool, detail: str) -> bool:
    line = f"criterion {num:2d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    REPORT.append(line)
    print(line)
    return ok


def timed_runs(make_records):
    start = time.perf_counter()
    records = make_records()
    return records, time.perf_counter() - start


def seeded_initial(mesh, vf, seed):
    values = random_feasible_field(mesh.n_elems, vf, mesh.elem_volumes, seed)
    return DesignField(values, mesh.nx, mesh.ny)


def uniform_initial(mesh, vf):
    return DesignField(np.full(mesh.n_elems, vf), mesh.nx, mesh.ny)


def max_pairwise_gap(values):
    gap = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            gap = max(gap, abs(values[i] - values[j]) / min(values[i], values[j]))
    return gap


@pytest.fixture(scope="module")
def mbb60():
    return build_mesh(60, 20, 1.0, "mbb_half")


@pytest.fixture(scope="module")
def relaxed_runs(mbb60):
    """Criterion 1 runs: p = 1, no filter, uniform plus three random starts."""

    def make():
        sched = ContinuationSchedule(p_stages=(1.0,), stage_max_iters=500)
        records = []
        inits = [("uniform", uniform_initial(mbb60, 0.5))]
        inits += [(f"seed{s}", seeded_initial(mbb60, 0.5, s)) for s in (1, 2, 3)]
        for label, init in inits:
            _, rec = run_optimization(
                mbb60, MaterialLaw(), init, schedule=sched, label=label
            )
            records.append(rec)
        return records

    return timed_runs(make)


@pytest.fixture(scope="module")
def penalized_runs(mbb60):
    """Criterion 3 runs: direct p = 3, sensitivity filter, five random starts."""

    def make():
        sched = ContinuationSchedule(p_stages=(3.0,), stage_max_iters=200)
        spec = FilterSpec(kind="sensitivity", r=1.5)
        records = []
        for s in (1, 2, 3, 4, 5):
            _, rec = run_optimization(
                mbb60,
                MaterialLaw(),
                seeded_initial(mbb60, 0.4, s),
                filter_spec=spec,
                schedule=sched,
                label=f"seed{s}",
            )
            records.append(rec)
        return records

    return timed_runs(make)


@pytest.fixture(scope="module")
def continuation_runs(mbb60):
    """Criterion 4 runs: stepped p schedule vs direct p = 3, uniform start."""

    def make():
        spec = FilterSpec(kind="sensitivity", r=1.5)
        out = {}
        for label, stages in (
            ("stepped", (1.0, 1.5, 2.0, 2.5, 3.0)),
            ("direct", (3.0,)),
        ):
            sched = ContinuationSchedule(p_stages=stages, stage_max_iters=200)
            _, rec = run_optimization(
                mbb60,
                MaterialLaw(),
                uniform_initial(mbb60, 0.5),
                filter_spec=spec,
                schedule=sched,
                label=label,
            )
            out[label] = rec
        return out

    return timed_runs(make)


def test_criterion_01_relaxed_uniqueness(relaxed_runs):
    records, elapsed = relaxed_runs
    finals = [rec.final_compliance for rec in records]
    gap = max_pairwise_gap(finals)
    all_converged = all(rec.converged for rec in records)
    ok = all_converged and gap < 0.01 and elapsed < 300.0
    assert _record(
        1,
        "relaxed-problem uniqueness",
        ok,
        f"4 starts, max gap {gap:.3e}, converged={all_converged}, {elapsed:.0f}s",
    )


def test_criterion_02_relaxed_convexity():
    start = time.perf_counter()
    mesh = build_mesh(12, 4, 1.0, "mbb_half")
    law = MaterialLaw(p=1.0)

    def objective(rho):
        state = assemble_and_solve(mesh, interpolate_modulus(law, rho), law.nu)
        return compliance(state)

    pairs = [
        (
            random_feasible_field(mesh.n_elems, 0.5, mesh.elem_volumes, 100 + 2 * i),
            random_feasible_field(mesh.n_elems, 0.5, mesh.elem_volumes, 101 + 2 * i),
        )
        for i in range(20)
    ]
    report = probe_pairs(objective, pairs, "convex", samples=9, tolerance=1e-9)
    elapsed = time.perf_counter() - start
    ok = report.passed and elapsed < 60.0
    assert _record(
        2,
        "relaxed-problem convexity",
        ok,
        f"20 pairs x 9 samples, violations={len(report.violations)}, "
        f"max gap {report.max_gap:.2e}, {elapsed:.0f}s",
    )


def test_criterion_03_penalized_local_minima(penalized_runs):
    records, elapsed = penalized_runs
    table = compare_runs(records)
    gap = table.max_gap_thresholded()
    ok = gap > 0.01 and elapsed < 600.0
    assert _record(
        3,
        "penalized local minima",
        ok,
        f"5 seeds, max thresholded gap {gap:.2%}, {elapsed:.0f}s",
    )


def test_criterion_04_continuation_benefit(continuation_runs):
    runs, elapsed = continuation_runs
    ratio = runs["stepped"].final_compliance / runs["direct"].final_compliance
    ok = ratio <= 1.05 and elapsed < 600.0
    assert _record(
        4,
        "continuation benefit",
        ok,
        f"stepped/direct compliance ratio {ratio:.4f}, {elapsed:.0f}s",
    )


def test_criterion_05_descent_preservation(relaxed_runs, penalized_runs, continuation_runs):
    records = list(relaxed_runs[0]) + list(penalized_runs[0])
    records += list(continuation_runs[0].values())
    dots = [row.descent_dot for rec in records for row in rec.history]
    violations = sum(1 for d in dots if not d > 0.0)
    ok = violations == 0
    assert _record(
        5,
        "descent preservation",
        ok,
        f"{len(records)} runs, {len(dots)} iterations, "
        f"min dot {min(dots):.3e}, violations={violations}",
    )


def test_criterion_06_checkerboard_suppression():
    start = time.perf_counter()
    mesh = build_mesh(40, 20, 1.0, "cantilever")
    init = seeded_initial(mesh, 0.78, 1)
    _, raw = run_optimization(
        mesh,
        MaterialLaw(),
        init,
        schedule=ContinuationSchedule(p_stages=(3.0,), stage_max_iters=100),
        label="unfiltered",
    )
    peak = max(row.checkerboard for row in raw.history)
    _, filtered = run_optimization(
        mesh,
        MaterialLaw(),
        init,
        filter_spec=FilterSpec(kind="sensitivity", r=1.5, weighting="constant"),
        schedule=ContinuationSchedule(p_stages=(3.0,), stage_max_iters=200),
        label="filtered",
    )
    final = checkerboard_index(mesh, filtered.final_rho_phys)
    elapsed = time.perf_counter() - start
    ok = peak >= 0.15 and final <= 0.02 and elapsed < 300.0
    assert _record(
        6,
        "checkerboard demonstration and suppression",
        ok,
        f"unfiltered peak {peak:.3f}, filtered final {final:.4f}, {elapsed:.0f}s",
    )


def test_criterion_07_filter_matrix_properties(mbb60):
    table = build_neighborhoods(mbb60, FilterSpec(kind="density", r=1.5))
    A = build_filter_matrix(table)
    row_sums = np.asarray(A.sum(axis=1)).ravel()
    rows_ok = np.max(np.abs(row_sums - 1.0)) <= 1e-12
    report = filter_matrix_invertibility_check(A)
    strip = build_neighborhoods(
        build_mesh(2, 1, 1.0, "custom"),
        FilterSpec(kind="density", r=1.5, weighting="constant"),
    )
    degenerate = filter_matrix_invertibility_check(build_filter_matrix(strip))
    ok = (
        rows_ok
        and report.rank == mbb60.n_elems
        and report.invertible
        and degenerate.rank == 1
        and degenerate.duplicate_row_pairs == [(0, 1)]
    )
    assert _record(
        7,
        "filter-matrix properties",
        ok,
        f"row-sum err {np.max(np.abs(row_sums - 1.0)):.1e}, rank {report.rank}/"
        f"{mbb60.n_elems}, strip rank {degenerate.rank} pair "
        f"{degenerate.duplicate_row_pairs}",
    )


def test_criterion_08_heaviside_limits():
    mesh = build_mesh(30, 10, 1.0, "mbb_half")
    spec = FilterSpec(kind="heaviside", r=1.5)
    A = build_filter_matrix(build_neighborhoods(mesh, spec))
    rho = splitmix64_uniform(201, mesh.n_elems)
    phys = apply_density_filter(A, rho)
    identity_err = float(np.max(np.abs(heaviside_project(phys, 0.0) - phys)))
    sched = ContinuationSchedule(p_stages=(1.0, 1.5, 2.0, 2.5, 3.0))
    _, rec = run_optimization(
        mesh,
        MaterialLaw(),
        uniform_initial(mesh, 0.5),
        filter_spec=FilterSpec(kind="density", r=1.5),
        schedule=sched,
        label="density-run",
    )
    sharp = discreteness_measure(heaviside_project(rec.final_rho_phys, 512.0))
    gray = discreteness_measure(rec.final_rho_phys)
    ok = identity_err <= 1e-15 and rec.converged and sharp < 5.0
    assert _record(
        8,
        "heaviside limits",
        ok,
        f"beta=0 err {identity_err:.1e}, beta=512 discreteness {sharp:.2f}% "
        f"(gray run {gray:.1f}%)",
    )


def test_criterion_09_pipeline_gradient():
    start = time.perf_counter()
    mesh = build_mesh(6, 4, 1.0, "mbb_half")
    law = MaterialLaw(p=3.0)
    spec = FilterSpec(kind="heaviside", r=1.5)
    pipeline = FilterPipeline(mesh, spec)
    beta = 8.0
    rho = random_feasible_field(mesh.n_elems, 0.5, mesh.elem_volumes, 9)

    def objective(x):
        phys = pipeline.physical(x, beta)
        state = assemble_and_solve(mesh, interpolate_modulus(law, phys), law.nu)
        return compliance(state)

    phys = pipeline.physical(rho, beta)
    state = assemble_and_solve(mesh, interpolate_modulus(law, phys), law.nu)
    grad_phys = compliance_sensitivities(mesh, law, phys, state)
    grad = pipeline.update_gradient(rho, beta, grad_phys)
    delta = 1e-6
    rel_errs = np.empty(mesh.n_elems)
    for e in range(mesh.n_elems):
        probe = rho.copy()
        probe[e] = rho[e] + delta
        up = objective(probe)
        probe[e] = rho[e] - delta
        down = objective(probe)
        fd = (up - down) / (2.0 * delta)
        rel_errs[e] = abs(fd - grad[e]) / max(abs(fd), abs(grad[e]))
    elapsed = time.perf_counter() - start
    worst = float(rel_errs.max())
    ok = worst < 1e-4 and elapsed < 60.0
    assert _record(
        9,
        "pipeline gradient correctness",
        ok,
        f"{mesh.n_elems} elements, worst relative error {worst:.1e}, {elapsed:.0f}s",
    )


def test_criterion_10_dilate_convexity():
    mesh = build_mesh(10, 6, 1.0, "custom")
    worst = -np.inf
    violations = 0
    for mean in ("arithmetic", "geometric", "harmonic"):
        spec = FilterSpec(kind="dilate", r=1.5, mean=mean)
        table = build_neighborhoods(mesh, spec)
        for i in range(200):
            a = splitmix64_uniform(1000 + 2 * i, mesh.n_elems)
            b = splitmix64_uniform(1001 + 2 * i, mesh.n_elems)
            mid = erode_dilate(table, 0.5 * (a + b), spec)
            avg = 0.5 * (erode_dilate(table, a, spec) + erode_dilate(table, b, spec))
            gap = float(np.max(mid - avg))
            worst = max(worst, gap)
            if gap > 1e-10:
                violations += 1
    ok = violations == 0
    assert _record(
        10,
        "dilate convexity",
        ok,
        f"3 means x 200 pairs, violations={violations}, worst gap {worst:.1e}",
    )
