"""2D density-based topology optimization laboratory.

Compliance minimization on structured Q4 meshes with SIMP penalization,
a family of sensitivity/density/projection/morphology filters, staged
continuation of the penalization exponent and projection sharpness, and
diagnostics that probe convexity, descent, and local-minima structure.
"""

from .config import ConfigError, RunConfig, format_config, load_config, parse_config
from .diagnostics import (
    ComparisonTable,
    ProbeReport,
    checkerboard_index,
    compare_runs,
    convexity_probe,
    descent_direction_check,
    discreteness_measure,
    probe_pairs,
    threshold_project,
)
from .filters import (
    FilterMatrixReport,
    FilterSpec,
    NeighborhoodTable,
    apply_density_filter,
    build_filter_matrix,
    build_neighborhoods,
    density_filter_chain_rule,
    erode_dilate,
    erode_dilate_chain_rule,
    filter_matrix_invertibility_check,
    filter_sensitivities,
    heaviside_chain_rule,
    heaviside_project,
)
from .material import (
    DesignField,
    MaterialLaw,
    interpolate_modulus,
    modulus_derivative,
)
from .mesh import (
    ElasticState,
    MeshModel,
    SolveError,
    assemble_and_solve,
    build_mesh,
    compliance,
    compliance_sensitivities,
    element_stiffness,
)
from .optimizer import (
    DEFAULT_BETA_STAGES,
    AscentDirectionError,
    ContinuationSchedule,
    OcBracketError,
    OcSettings,
    RunRecord,
    continuation_advance,
    oc_update,
    run_optimization,
)
from .sampling import random_feasible_field, splitmix64_uniform

__version__ = "0.1.0"

__all__ = [
    "AscentDirectionError",
    "ComparisonTable",
    "ConfigError",
    "ContinuationSchedule",
    "DEFAULT_BETA_STAGES",
    "DesignField",
    "ElasticState",
    "FilterMatrixReport",
    "FilterSpec",
    "MaterialLaw",
    "MeshModel",
    "NeighborhoodTable",
    "OcBracketError",
    "OcSettings",
    "ProbeReport",
    "RunConfig",
    "RunRecord",
    "SolveError",
    "apply_density_filter",
    "assemble_and_solve",
    "build_filter_matrix",
    "build_mesh",
    "build_neighborhoods",
    "checkerboard_index",
    "compare_runs",
    "compliance",
    "compliance_sensitivities",
    "continuation_advance",
    "convexity_probe",
    "density_filter_chain_rule",
    "descent_direction_check",
    "discreteness_measure",
    "element_stiffness",
    "erode_dilate",
    "erode_dilate_chain_rule",
    "filter_matrix_invertibility_check",
    "filter_sensitivities",
    "format_config",
    "heaviside_chain_rule",
    "heaviside_project",
    "interpolate_modulus",
    "load_config",
    "modulus_derivative",
    "oc_update",
    "parse_config",
    "probe_pairs",
    "random_feasible_field",
    "run_optimization",
    "splitmix64_uniform",
    "threshold_project",
    "__version__",
]
