"""Round-trippable file formats for density fields and run histories.

CSV density files carry 17 significant digits in a normalized exponent form
(mantissa with 16 decimals, exponent without sign padding), enough to
reproduce every double bit-exactly on re-import.  PGM images map solid
material to black.  VTK files use the legacy structured-points ASCII layout
with one cell scalar per element.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .mesh import MeshModel

if TYPE_CHECKING:
    from .diagnostics import ComparisonTable, ProbeReport
    from .optimizer import RunRecord


def fmt_float(x: float) -> str:
    """17-significant-digit scientific notation, e.g. 0.0000000000000000e0."""
    mantissa, exponent = f"{x:.16e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def export_density(
    field: np.ndarray, mesh: MeshModel, path: str | Path, fmt: str = "csv"
) -> Path:
    """Write a density field in one of csv, pgm, or vtk.

    csv: one line per element row, bottom row (ey = 0) first, values
    formatted by fmt_float; re-import reproduces the field bit-exactly.
    pgm: binary 8-bit P5, one pixel per element, top row first, density 1
    mapped to black (0) and density 0 to white (255).
    vtk: legacy structured-points ASCII with CELL_DATA scalars "density".
    """
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_elems,):
        raise ValueError("field must have one value per element")
    path = Path(path)
    grid = field.reshape(mesh.ny, mesh.nx)
    if fmt == "csv":
        lines = [",".join(fmt_float(v) for v in row) for row in grid]
        path.write_text("\n".join(lines) + "\n", newline="\n")
    elif fmt == "pgm":
        header = f"P5\n{mesh.nx} {mesh.ny}\n255\n".encode("ascii")
        pixels = np.rint(255.0 * (1.0 - np.clip(grid[::-1], 0.0, 1.0)))
        path.write_bytes(header + pixels.astype(np.uint8).tobytes())
    elif fmt == "vtk":
        lines = [
            "# vtk DataFile Version 3.0",
            "density field",
            "ASCII",
            "DATASET STRUCTURED_POINTS",
            f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
            "ORIGIN 0 0 0",
            f"SPACING {mesh.h!r} {mesh.h!r} 1",
            f"CELL_DATA {mesh.n_elems}",
            "SCALARS density double 1",
            "LOOKUP_TABLE default",
        ]
        lines.extend(fmt_float(v) for v in field)
        path.write_text("\n".join(lines) + "\n", newline="\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return path


def import_density_csv(path: str | Path) -> tuple[np.ndarray, int, int]:
    """Read a density CSV back; returns (values, nx, ny), bottom row first."""
    rows: list[list[float]] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise ValueError(f"{path}: line {lineno} is not a comma-separated row")
    if not rows:
        raise ValueError(f"{path}: empty density file")
    nx = len(rows[0])
    if any(len(r) != nx for r in rows):
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows, dtype=float).ravel(), nx, len(rows)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]):
    def cell(value: object) -> str:
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


HISTORY_COLUMNS = (
    "iteration",
    "stage",
    "p",
    "beta",
    "compliance",
    "volume_fraction",
    "max_change",
    "lambda",
    "descent_dot",
    "sign_flips",
    "discreteness",
    "checkerboard",
)


def write_history_csv(record: "RunRecord", path: str | Path) -> Path:
    rows = [
        (
            row.iteration,
            row.stage,
            float(row.p),
            float(row.beta),
            float(row.compliance),
            float(row.volume_fraction),
            float(row.max_change),
            float(row.lam),
            float(row.descent_dot),
            row.sign_flips,
            float(row.discreteness),
            float(row.checkerboard),
        )
        for row in record.history
    ]
    return _write_csv(Path(path), HISTORY_COLUMNS, rows)


def write_summary_csv(record: "RunRecord", summary_row, path: str | Path) -> Path:
    """Key-value summary of a finished run; summary_row is its RunSummary."""
    stages = ";".join(
        f"p={s.p!r} beta={s.beta!r} iters={s.iterations} converged={s.converged}"
        for s in record.stage_results
    )
    rows = [
        ("label", record.label),
        ("preset", record.mesh.preset),
        ("nx", record.mesh.nx),
        ("ny", record.mesh.ny),
        ("h", float(record.mesh.h)),
        ("vf_target", float(record.vf_target)),
        ("filter_kind", record.filter_spec.kind),
        ("filter_radius", float(record.filter_spec.r)),
        ("initial_mode", record.initial_mode),
        ("seed", "" if record.seed is None else record.seed),
        ("iterations", record.iterations),
        ("all_stages_converged", record.converged),
        ("stages", stages),
        ("final_compliance", float(record.final_compliance)),
        ("thresholded_compliance", float(summary_row.compliance_thresholded)),
        ("discreteness", float(summary_row.discreteness)),
        ("checkerboard", float(summary_row.checkerboard)),
        (
            "thresholded_volume_fraction",
            float(summary_row.volume_fraction_thresholded),
        ),
        ("min_descent_dot", float(min(r.descent_dot for r in record.history))),
    ]
    return _write_csv(Path(path), ("key", "value"), rows)


def write_comparison_csv(table: "ComparisonTable", path: str | Path) -> Path:
    """Per-run rows of a comparison table."""
    rows = [
        (
            r.label,
            r.iterations,
            float(r.compliance),
            float(r.compliance_thresholded),
            float(r.discreteness),
            float(r.checkerboard),
            float(r.volume_fraction_thresholded),
        )
        for r in table.runs
    ]
    return _write_csv(
        Path(path),
        (
            "label",
            "iterations",
            "compliance",
            "compliance_thresholded",
            "discreteness",
            "checkerboard",
            "volume_fraction_thresholded",
        ),
        rows,
    )


def write_comparison_pairs_csv(table: "ComparisonTable", path: str | Path) -> Path:
    """Pairwise relative compliance gaps of a comparison table."""
    rows = [
        (p.label_a, p.label_b, float(p.gap_raw), float(p.gap_thresholded))
        for p in table.pairs
    ]
    return _write_csv(
        Path(path), ("label_a", "label_b", "gap_raw", "gap_thresholded"), rows
    )


def write_probe_csv(report: "ProbeReport", path: str | Path) -> Path:
    """Probe outcome: a summary row followed by one row per violation."""
    lines = [
        "property,pairs_tested,samples,tolerance,violations,max_gap",
        ",".join(
            [
                report.property_name,
                str(report.pairs_tested),
                str(report.samples),
                repr(report.tolerance),
                str(len(report.violations)),
                repr(float(report.max_gap)),
            ]
        ),
        "pair,lambda,gap",
    ]
    lines.extend(
        f"{pair},{lam!r},{gap!r}" for pair, lam, gap in report.violations
    )
    p = Path(path)
    p.write_text("\n".join(lines) + "\n", newline="\n")
    return p
