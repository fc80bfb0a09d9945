"""Flat key-value run configuration: parsing, validation, and round-tripping.

The format is one `section.key = value` assignment per line with `#` comments,
chosen over a nested format so that resolved configs diff cleanly across sweep
arms.  Unknown and duplicate keys are hard errors.  Environment variables with
the TOPOLAB_ prefix override file values: section.key maps to
TOPOLAB_SECTION__KEY (double underscore between section and key), so e.g.
TOPOLAB_MESH__NX=80 overrides mesh.nx and TOPOLAB_VF_TARGET overrides the
top-level vf_target.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .filters import FILTER_KINDS, MEANS, WEIGHTINGS, FilterSpec
from .material import DesignField, MaterialLaw
from .mesh import PRESETS, MeshModel, build_mesh
from .optimizer import ContinuationSchedule, OcSettings
from .sampling import random_feasible_field

ENV_PREFIX = "TOPOLAB_"
EXPORT_FORMATS = ("csv", "pgm", "vtk")
INITIAL_MODES = ("uniform", "random", "file")


class ConfigError(ValueError):
    """Malformed or invalid configuration input."""


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_seed(text: str) -> int:
    value = _parse_int(text)
    if not 0 <= value < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _parse_str(text: str) -> str:
    return text


def _parse_float_list(text: str) -> tuple[float, ...]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("expected a comma-separated list of numbers")
    return tuple(_parse_float(s) for s in items)


def _parse_str_list(text: str) -> tuple[str, ...]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("expected a comma-separated list")
    return tuple(items)


@dataclass(frozen=True)
class _Key:
    name: str
    parse: Callable[[str], object]
    default: object = None
    required: bool = False


# Registry order is the canonical output order of format_config.
_REGISTRY: tuple[_Key, ...] = (
    _Key("mesh.nx", _parse_int, required=True),
    _Key("mesh.ny", _parse_int, required=True),
    _Key("mesh.h", _parse_float, default=1.0),
    _Key("mesh.preset", _parse_str, default="mbb_half"),
    _Key("vf_target", _parse_float, required=True),
    _Key("material.E0", _parse_float, default=1.0),
    _Key("material.Emin", _parse_float, default=1e-9),
    _Key("material.nu", _parse_float, default=0.3),
    _Key("filter.kind", _parse_str, default="none"),
    _Key("filter.r_over_h", _parse_float, default=1.5),
    _Key("filter.weighting", _parse_str, default="linear"),
    _Key("filter.mean", _parse_str, default="arithmetic"),
    _Key("filter.epsilon", _parse_float, default=1e-3),
    _Key("schedule.p_stages", _parse_float_list, default=(1.0, 1.5, 2.0, 2.5, 3.0)),
    _Key("schedule.beta_stages", _parse_float_list, default=None),
    _Key("schedule.stage_tol", _parse_float, default=0.01),
    _Key("schedule.stage_max_iters", _parse_int, default=200),
    _Key("oc.move_limit", _parse_float, default=0.2),
    _Key("oc.damping", _parse_float, default=0.5),
    _Key("initial_guess.mode", _parse_str, default="uniform"),
    _Key("initial_guess.seed", _parse_seed, default=0),
    _Key("initial_guess.path", _parse_str, default=""),
    _Key("outputs.directory", _parse_str, default="out"),
    _Key("outputs.formats", _parse_str_list, default=("csv", "pgm")),
)
_BY_NAME = {k.name: k for k in _REGISTRY}


@dataclass(frozen=True)
class MeshSection:
    nx: int
    ny: int
    h: float = 1.0
    preset: str = "mbb_half"


@dataclass(frozen=True)
class MaterialSection:
    E0: float = 1.0
    Emin: float = 1e-9
    nu: float = 0.3


@dataclass(frozen=True)
class FilterSection:
    kind: str = "none"
    r_over_h: float = 1.5
    weighting: str = "linear"
    mean: str = "arithmetic"
    epsilon: float = 1e-3


@dataclass(frozen=True)
class ScheduleSection:
    p_stages: tuple[float, ...] = (1.0, 1.5, 2.0, 2.5, 3.0)
    beta_stages: tuple[float, ...] | None = None
    stage_tol: float = 0.01
    stage_max_iters: int = 200


@dataclass(frozen=True)
class OcSection:
    move_limit: float = 0.2
    damping: float = 0.5


@dataclass(frozen=True)
class InitialGuessSection:
    mode: str = "uniform"
    seed: int = 0
    path: str = ""


@dataclass(frozen=True)
class OutputsSection:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv", "pgm")


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; factory methods build the runtime objects."""

    mesh: MeshSection
    vf_target: float
    material: MaterialSection = MaterialSection()
    filter: FilterSection = FilterSection()
    schedule: ScheduleSection = ScheduleSection()
    oc: OcSection = OcSection()
    initial_guess: InitialGuessSection = InitialGuessSection()
    outputs: OutputsSection = OutputsSection()

    def build_mesh(self) -> MeshModel:
        return build_mesh(self.mesh.nx, self.mesh.ny, self.mesh.h, self.mesh.preset)

    def material_law(self) -> MaterialLaw:
        return MaterialLaw(
            E0=self.material.E0,
            Emin=self.material.Emin,
            nu=self.material.nu,
            p=self.schedule.p_stages[-1],
        )

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(
            kind=self.filter.kind,
            r=self.filter.r_over_h * self.mesh.h,
            weighting=self.filter.weighting,
            mean=self.filter.mean,
            epsilon=self.filter.epsilon,
        )

    def continuation_schedule(self) -> ContinuationSchedule:
        beta = self.schedule.beta_stages
        return ContinuationSchedule(
            p_stages=self.schedule.p_stages,
            beta_stages=beta if beta is not None else (0.0,),
            stage_convergence_tol=self.schedule.stage_tol,
            stage_max_iters=self.schedule.stage_max_iters,
        )

    def oc_settings(self) -> OcSettings:
        return OcSettings(move_limit=self.oc.move_limit, damping=self.oc.damping)

    def initial_field(self, mesh: MeshModel) -> DesignField:
        mode = self.initial_guess.mode
        if mode == "uniform":
            values = np.full(mesh.n_elems, self.vf_target)
        elif mode == "random":
            values = random_feasible_field(
                mesh.n_elems, self.vf_target, mesh.elem_volumes, self.initial_guess.seed
            )
        else:
            from .export import import_density_csv

            values, nx, ny = import_density_csv(self.initial_guess.path)
            if (nx, ny) != (mesh.nx, mesh.ny):
                raise ConfigError(
                    f"initial_guess.path: field is {nx}x{ny}, mesh is "
                    f"{mesh.nx}x{mesh.ny}"
                )
        return DesignField(values=values, nx=mesh.nx, ny=mesh.ny)


def _read_pairs(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _BY_NAME:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def _env_overrides(env: Mapping[str, str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        if key not in _BY_NAME:
            raise ConfigError(f"environment variable {name}: unknown key {key!r}")
        overrides[key] = value
    return overrides


def parse_config(text: str, env: Mapping[str, str] | None = None) -> RunConfig:
    """Parse and validate a config document.

    env defaults to os.environ; pass an empty mapping to disable overrides.
    Raises ConfigError with a line number for parse problems and with the
    offending key for validation problems.
    """
    raw = _read_pairs(text)
    raw.update(_env_overrides(os.environ if env is None else env))
    values: dict[str, object] = {}
    for key in _REGISTRY:
        if key.name in raw:
            try:
                values[key.name] = key.parse(raw[key.name])
            except ConfigError as exc:
                raise ConfigError(f"key {key.name}: {exc}") from None
        elif key.required:
            raise ConfigError(f"missing required key {key.name!r}")
        else:
            values[key.name] = key.default

    def section(prefix: str, cls):
        fields = {
            k.name.split(".", 1)[1]: values[k.name]
            for k in _REGISTRY
            if k.name.startswith(prefix + ".")
        }
        return cls(**fields)

    config = RunConfig(
        mesh=section("mesh", MeshSection),
        vf_target=values["vf_target"],
        material=section("material", MaterialSection),
        filter=section("filter", FilterSection),
        schedule=section("schedule", ScheduleSection),
        oc=section("oc", OcSection),
        initial_guess=section("initial_guess", InitialGuessSection),
        outputs=section("outputs", OutputsSection),
    )
    _validate(config)
    return config


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), env=env)


def _fail(key: str, message: str) -> None:
    raise ConfigError(f"key {key}: {message}")


def _validate(config: RunConfig) -> None:
    m = config.mesh
    if m.nx < 1 or m.ny < 1:
        _fail("mesh.nx", f"grid must be at least 1x1, got {m.nx}x{m.ny}")
    if not m.h > 0.0:
        _fail("mesh.h", f"element size must be positive, got {m.h}")
    if m.preset not in PRESETS:
        _fail("mesh.preset", f"unknown preset {m.preset!r}, expected one of {PRESETS}")
    if not 0.0 < config.vf_target < 1.0:
        _fail("vf_target", f"volume fraction must lie in (0, 1), got {config.vf_target}")
    mat = config.material
    if not mat.E0 > 0.0:
        _fail("material.E0", f"must be positive, got {mat.E0}")
    if not 0.0 < mat.Emin < mat.E0:
        _fail("material.Emin", f"must satisfy 0 < Emin < E0, got {mat.Emin}")
    if not -1.0 < mat.nu < 0.5:
        _fail("material.nu", f"must lie in (-1, 0.5), got {mat.nu}")
    f = config.filter
    if f.kind not in FILTER_KINDS:
        _fail("filter.kind", f"unknown filter kind {f.kind!r}")
    if f.r_over_h < 0.0:
        _fail("filter.r_over_h", f"radius ratio must be >= 0, got {f.r_over_h}")
    if f.weighting not in WEIGHTINGS:
        _fail("filter.weighting", f"unknown weighting {f.weighting!r}")
    if f.mean not in MEANS:
        _fail("filter.mean", f"unknown mean {f.mean!r}")
    try:
        config.filter_spec()
    except ValueError as exc:
        _fail("filter.kind", str(exc))
    s = config.schedule
    if f.kind == "heaviside" and s.beta_stages is None:
        _fail(
            "schedule.beta_stages",
            "filter.kind = heaviside needs an explicit projection ramp "
            "(e.g. 1,2,4,...,512)",
        )
    if s.beta_stages is not None and f.kind != "heaviside":
        _fail(
            "schedule.beta_stages",
            f"a beta ramp has no effect with filter.kind = {f.kind}",
        )
    if s.beta_stages is not None and any(b < 0.0 for b in s.beta_stages):
        _fail("schedule.beta_stages", "beta values must be >= 0")
    if not s.stage_tol > 0.0:
        _fail("schedule.stage_tol", f"must be positive, got {s.stage_tol}")
    if s.stage_max_iters < 1:
        _fail("schedule.stage_max_iters", f"must be at least 1, got {s.stage_max_iters}")
    try:
        config.continuation_schedule()
    except ValueError as exc:
        _fail("schedule.p_stages", str(exc))
    if not 0.0 <= config.oc.move_limit <= 1.0:
        _fail("oc.move_limit", f"must lie in [0, 1], got {config.oc.move_limit}")
    if not 0.0 < config.oc.damping <= 1.0:
        _fail("oc.damping", f"must lie in (0, 1], got {config.oc.damping}")
    g = config.initial_guess
    if g.mode not in INITIAL_MODES:
        _fail("initial_guess.mode", f"unknown mode {g.mode!r}")
    if g.mode == "file":
        if not g.path:
            _fail("initial_guess.path", "mode = file needs a density CSV path")
        if not Path(g.path).is_file():
            _fail("initial_guess.path", f"no such file: {g.path}")
    o = config.outputs
    if not o.directory:
        _fail("outputs.directory", "output directory must not be empty")
    for fmt in o.formats:
        if fmt not in EXPORT_FORMATS:
            _fail("outputs.formats", f"unknown format {fmt!r}")
    if len(set(o.formats)) != len(o.formats):
        _fail("outputs.formats", "duplicate formats")


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        raise TypeError("no boolean keys exist")
    if isinstance(value, (int, str)):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    raise TypeError(f"cannot format {value!r}")


def format_config(config: RunConfig) -> str:
    """Canonical document with every default materialized; parses back equal.

    schedule.beta_stages is omitted when absent (no projection ramp), since
    an empty value has no list syntax.
    """
    flat: dict[str, object] = {
        "mesh.nx": config.mesh.nx,
        "mesh.ny": config.mesh.ny,
        "mesh.h": config.mesh.h,
        "mesh.preset": config.mesh.preset,
        "vf_target": config.vf_target,
        "material.E0": config.material.E0,
        "material.Emin": config.material.Emin,
        "material.nu": config.material.nu,
        "filter.kind": config.filter.kind,
        "filter.r_over_h": config.filter.r_over_h,
        "filter.weighting": config.filter.weighting,
        "filter.mean": config.filter.mean,
        "filter.epsilon": config.filter.epsilon,
        "schedule.p_stages": config.schedule.p_stages,
        "schedule.beta_stages": config.schedule.beta_stages,
        "schedule.stage_tol": config.schedule.stage_tol,
        "schedule.stage_max_iters": config.schedule.stage_max_iters,
        "oc.move_limit": config.oc.move_limit,
        "oc.damping": config.oc.damping,
        "initial_guess.mode": config.initial_guess.mode,
        "initial_guess.seed": config.initial_guess.seed,
        "initial_guess.path": config.initial_guess.path,
        "outputs.directory": config.outputs.directory,
        "outputs.formats": config.outputs.formats,
    }
    lines = []
    last_section = None
    for key in _REGISTRY:
        value = flat[key.name]
        if key.name == "schedule.beta_stages" and value is None:
            continue
        section = key.name.split(".", 1)[0] if "." in key.name else ""
        if last_section is not None and section != last_section:
            lines.append("")
        last_section = section
        lines.append(f"{key.name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def with_override(config: RunConfig, key: str, value: object) -> RunConfig:
    """A copy of config with one registry key replaced (used by sweeps)."""
    if key not in _BY_NAME:
        raise ConfigError(f"unknown key {key!r}")
    if key == "vf_target":
        updated = replace(config, vf_target=value)
    else:
        section_name, field_name = key.split(".", 1)
        section = getattr(config, section_name)
        updated = replace(config, **{section_name: replace(section, **{field_name: value})})
    _validate(updated)
    return updated
