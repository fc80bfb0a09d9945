"""Command line front end: run, sweep, probe, and export subcommands.

All run artifacts land in the config's outputs.directory: the resolved
config, density fields (final and thresholded) in the requested formats,
the iteration history, a key-value summary, and rendered figures of the
density and the convergence traces.  Sweeps add per-arm subdirectories plus
comparison tables and a comparison chart at the root.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import (
    ConfigError,
    RunConfig,
    format_config,
    load_config,
    with_override,
)
from .diagnostics import (
    PROBE_PROPERTIES,
    ComparisonTable,
    ProbeReport,
    compare_runs,
    probe_pairs,
    threshold_project,
)
from .export import (
    export_density,
    import_density_csv,
    write_comparison_csv,
    write_comparison_pairs_csv,
    write_history_csv,
    write_probe_csv,
    write_summary_csv,
)
from .figures import save_comparison_figure, save_density_figure, save_history_figure
from .material import interpolate_modulus
from .mesh import assemble_and_solve, build_mesh, compliance
from .optimizer import FilterPipeline, RunRecord, run_optimization
from .sampling import random_feasible_field

SWEEP_AXES = (
    "initial_guess.seed",
    "schedule.p_stages",
    "filter.kind",
    "filter.r_over_h",
)

# Filter kinds that transform design variables into distinct physical fields;
# for these the design-variable field is exported alongside the physical one.
_TRANSFORM_KINDS = ("density", "heaviside", "erode", "dilate")


@dataclass
class RunCaseResult:
    status: int
    out_dir: Path
    files: list[Path]
    record: RunRecord


def _resolve_out_dir(config: RunConfig, base_dir: Path | None) -> Path:
    out = Path(config.outputs.directory)
    if base_dir is not None and not out.is_absolute():
        out = Path(base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_case(
    config: RunConfig, base_dir: Path | None = None, label: str | None = None
) -> RunCaseResult:
    """Execute one optimization case and write all its artifacts.

    Returns status 0 even when stages hit their iteration caps (the summary
    records which stages converged); hard errors propagate to the caller.
    """
    out_dir = _resolve_out_dir(config, base_dir)
    label = label or out_dir.name
    mesh = config.build_mesh()
    law = config.material_law()
    initial = config.initial_field(mesh)
    mode = config.initial_guess.mode
    seed = config.initial_guess.seed if mode == "random" else None
    _, record = run_optimization(
        mesh,
        law,
        initial,
        config.filter_spec(),
        config.continuation_schedule(),
        config.oc_settings(),
        vf_target=config.vf_target,
        label=label,
        initial_mode=mode,
        seed=seed,
    )
    files = [out_dir / "config.txt"]
    files[0].write_text(format_config(config), newline="\n")
    table = compare_runs([record])
    summary = table.runs[0]
    binary = threshold_project(
        record.final_rho_phys, mesh.elem_volumes, config.vf_target
    )
    for fmt in config.outputs.formats:
        files.append(
            export_density(record.final_rho_phys, mesh, out_dir / f"density.{fmt}", fmt)
        )
        files.append(
            export_density(
                binary, mesh, out_dir / f"density_thresholded.{fmt}", fmt
            )
        )
    if config.filter.kind in _TRANSFORM_KINDS and "csv" in config.outputs.formats:
        files.append(
            export_density(
                record.final_rho, mesh, out_dir / "density_design.csv", "csv"
            )
        )
    files.append(write_history_csv(record, out_dir / "history.csv"))
    files.append(write_summary_csv(record, summary, out_dir / "summary.csv"))
    files.append(
        save_density_figure(
            record.final_rho_phys,
            mesh,
            out_dir / "density.png",
            title=f"{label}: c = {record.final_compliance:.6g}",
        )
    )
    files.append(save_history_figure(record, out_dir / "convergence.png"))
    return RunCaseResult(status=0, out_dir=out_dir, files=files, record=record)


def _parse_axis_value(axis: str, text: str):
    if axis == "schedule.p_stages":
        try:
            return tuple(float(tok) for tok in text.split(":") if tok)
        except ValueError:
            raise ConfigError(
                f"bad p_stages value {text!r}; use colon-separated stages like 1:2:3"
            ) from None
    if axis == "filter.kind":
        return text
    if axis == "filter.r_over_h":
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"bad r_over_h value {text!r}") from None
    raise ConfigError(f"invalid sweep axis {axis!r}")


def sweep(
    config: RunConfig,
    axis: str,
    values: list[str],
    seeds: list[int] | None = None,
    base_dir: Path | None = None,
) -> tuple[ComparisonTable, list[Path]]:
    """Run every arm of a parameter sweep and emit comparison tables.

    For axis initial_guess.seed the arm values are the seeds themselves
    (given via --values or --seeds); other axes take their values from
    --values and replicate each arm per seed in --seeds, switching the
    initial guess to seeded-random mode.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"invalid sweep axis {axis!r}; choose from {SWEEP_AXES}")
    seeds = list(seeds or [])
    root = _resolve_out_dir(config, base_dir)
    arms: list[tuple[str, RunConfig]] = []
    if axis == "initial_guess.seed":
        seed_values = [int(v) for v in values] if values else seeds
        if not seed_values:
            raise ConfigError("a seed sweep needs --values or --seeds")
        randomized = with_override(config, "initial_guess.mode", "random")
        for s in seed_values:
            arms.append((f"seed={s}", with_override(randomized, "initial_guess.seed", s)))
    else:
        if not values:
            raise ConfigError(f"sweep over {axis} needs --values")
        for text in values:
            cfg_v = with_override(config, axis, _parse_axis_value(axis, text))
            arm_label = f"{axis.rsplit('.', 1)[1]}={text.replace(':', '-')}"
            if not seeds:
                arms.append((arm_label, cfg_v))
                continue
            randomized = with_override(cfg_v, "initial_guess.mode", "random")
            for s in seeds:
                arms.append(
                    (
                        f"{arm_label}_seed={s}",
                        with_override(randomized, "initial_guess.seed", s),
                    )
                )
    records: list[RunRecord] = []
    files: list[Path] = []
    for arm_label, arm_config in arms:
        arm_config = with_override(
            arm_config, "outputs.directory", str(root / arm_label)
        )
        result = run_case(arm_config, label=arm_label)
        records.append(result.record)
        files.extend(result.files)
    table = compare_runs(records)
    files.append(write_comparison_csv(table, root / "comparison.csv"))
    files.append(write_comparison_pairs_csv(table, root / "comparison_pairs.csv"))
    files.append(save_comparison_figure(table, root / "comparison.png"))
    return table, files


def probe_case(
    config: RunConfig,
    property_name: str,
    pairs: int = 20,
    samples: int = 9,
    base_dir: Path | None = None,
) -> tuple[ProbeReport, Path]:
    """Sample a segment inequality of the config's objective.

    The objective is the compliance the configured run minimizes: physical
    densities through the configured filter at the final (p, beta) stage.
    Endpoint pairs are random volume-feasible fields seeded from
    initial_guess.seed.
    """
    if pairs < 1:
        raise ConfigError(f"need at least one pair, got {pairs}")
    mesh = config.build_mesh()
    law = config.material_law()
    spec = config.filter_spec()
    schedule = config.continuation_schedule()
    _, beta_last = schedule.stages()[-1]
    pipeline = FilterPipeline(mesh, spec)

    def objective(rho):
        rho_phys = pipeline.physical(rho, beta_last)
        state = assemble_and_solve(mesh, interpolate_modulus(law, rho_phys), law.nu)
        return compliance(state)

    base = config.initial_guess.seed
    pair_fields = [
        (
            random_feasible_field(
                mesh.n_elems, config.vf_target, mesh.elem_volumes, base + 2 * i
            ),
            random_feasible_field(
                mesh.n_elems, config.vf_target, mesh.elem_volumes, base + 2 * i + 1
            ),
        )
        for i in range(pairs)
    ]
    report = probe_pairs(objective, pair_fields, property_name, samples)
    out_dir = _resolve_out_dir(config, base_dir)
    path = write_probe_csv(report, out_dir / "probe.csv")
    return report, path


def export_case(
    field_file: Path, fmt: str, out: Path | None = None, h: float = 1.0
) -> Path:
    """Convert a density CSV to any of the export formats."""
    values, nx, ny = import_density_csv(field_file)
    mesh = build_mesh(nx, ny, h, "custom")
    target = Path(out) if out is not None else Path(field_file).with_suffix(f".{fmt}")
    return export_density(values, mesh, target, fmt)


def _apply_out_dir(config: RunConfig, out_dir: Path | None) -> RunConfig:
    if out_dir is None:
        return config
    return with_override(config, "outputs.directory", str(out_dir))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topolab",
        description="2D compliance minimization lab: SIMP, filters, continuation, "
        "and landscape diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one case from a config file")
    run_p.add_argument("config", type=Path, help="config file path")
    run_p.add_argument("--out-dir", type=Path, help="override outputs.directory")
    run_p.add_argument("--label", help="run label used in reports")

    sweep_p = sub.add_parser("sweep", help="run a parameter sweep and compare arms")
    sweep_p.add_argument("config", type=Path)
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument(
        "--values",
        nargs="*",
        default=[],
        help="axis values; p_stages stages are colon-separated (e.g. 1:1.5:2)",
    )
    sweep_p.add_argument(
        "--seeds", nargs="*", type=int, default=[], help="random-guess seeds per arm"
    )
    sweep_p.add_argument("--out-dir", type=Path)

    probe_p = sub.add_parser("probe", help="sample a convexity-style inequality")
    probe_p.add_argument("config", type=Path)
    probe_p.add_argument(
        "--property", default="convex", choices=PROBE_PROPERTIES
    )
    probe_p.add_argument("--pairs", type=int, default=20)
    probe_p.add_argument("--samples", type=int, default=9)
    probe_p.add_argument("--out-dir", type=Path)

    export_p = sub.add_parser("export", help="convert a density CSV")
    export_p.add_argument("field_file", type=Path)
    export_p.add_argument("--format", required=True, choices=("csv", "pgm", "vtk"))
    export_p.add_argument("--out", type=Path)
    export_p.add_argument(
        "--h", type=float, default=1.0, help="element size for geometric formats"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = _apply_out_dir(load_config(args.config), args.out_dir)
            result = run_case(config, label=args.label)
            rec = result.record
            print(
                f"{rec.label}: {rec.iterations} iterations, "
                f"final compliance {rec.final_compliance:.6g}, "
                f"{'all stages converged' if rec.converged else 'some stages capped'}"
            )
            print(f"outputs in {result.out_dir}")
            return result.status
        if args.command == "sweep":
            config = _apply_out_dir(load_config(args.config), args.out_dir)
            table, files = sweep(config, args.axis, args.values, args.seeds)
            print(
                f"sweep over {args.axis}: {len(table.runs)} runs, "
                f"max thresholded gap {table.max_gap_thresholded():.4%}, "
                f"max raw gap {table.max_gap_raw():.4%}"
            )
            print(f"outputs in {files[-1].parent}")
            return 0
        if args.command == "probe":
            config = _apply_out_dir(load_config(args.config), args.out_dir)
            report, path = probe_case(
                config, args.property, pairs=args.pairs, samples=args.samples
            )
            print(
                f"probe {report.property_name}: pairs={report.pairs_tested} "
                f"samples={report.samples} violations={len(report.violations)} "
                f"max_gap={report.max_gap:.3e}"
            )
            print(f"report: {path}")
            return 0
        # export
        path = export_case(args.field_file, args.format, args.out, args.h)
        print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
