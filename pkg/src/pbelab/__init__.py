"""Diagnostics for projected Bellman equations under linear function approximation."""

__version__ = "0.1.0"

from .algorithms import (
    RunTrace,
    bellman_error_gradient,
    expected_td_lambda,
    representative_value_iteration,
    residual_gradient,
    sampled_td_lambda,
)
from .ambiguity import (
    AmbiguityWitness,
    FConstruction,
    TemplateSolution,
    construct_f,
    detect_ambiguity,
    environment_from_f,
    state_split_alias,
    sutton_barto_pair,
    witness_from_nullspace,
)
from .errors import NumericalError, PbeLabError, ValidationError
from .flatness import ExtremaReport, FlatnessVerdict, extrema_report, flatness_audit, theorem2_check
from .mdp import (
    FiniteMdp,
    Measure,
    apply_bellman,
    apply_p_lambda,
    apply_td_lambda,
    bellman_error,
    g_factor,
    mu_inner,
    mu_norm,
    r_lambda,
    stationary_distribution,
)
from .projection import (
    FeatureSet,
    ProjectedSystem,
    ProjectionBasis,
    SingularReport,
    adjoint_image_dim_check,
    assemble_system,
    normalize_basis,
    oblique_project,
    solve_system,
)

__all__ = [
    "AmbiguityWitness", "ExtremaReport", "FConstruction", "FeatureSet", "FiniteMdp",
    "FlatnessVerdict", "Measure", "NumericalError", "PbeLabError", "ProjectedSystem",
    "ProjectionBasis", "RunTrace", "SingularReport", "TemplateSolution", "ValidationError",
    "adjoint_image_dim_check", "apply_bellman", "apply_p_lambda", "apply_td_lambda",
    "assemble_system", "bellman_error", "bellman_error_gradient", "construct_f",
    "detect_ambiguity", "environment_from_f", "expected_td_lambda", "extrema_report",
    "flatness_audit", "g_factor", "mu_inner", "mu_norm", "normalize_basis", "oblique_project",
    "r_lambda", "representative_value_iteration", "residual_gradient", "sampled_td_lambda",
    "solve_system", "state_split_alias", "stationary_distribution", "sutton_barto_pair",
    "theorem2_check", "witness_from_nullspace",
]
