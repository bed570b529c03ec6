"""Fully discrete Runge-Kutta discontinuous Galerkin schemes on periodic
domains, the projection toolkit used to analyze them, and a verification
harness that measures convergence rates and stability margins."""

__version__ = "0.1.0"

from .core_fem import (
    ConfigError,
    DGFunction,
    Mesh1D,
    NumericalError,
    SmoothFunction,
    gauss_rule,
    l2_error,
    legendre_table,
    mean_value,
    project_l2,
)
from .dg_ops1d import (
    LinearOperator,
    assemble_d_theta,
    assemble_high_order_lh,
    assemble_ultraweak_third,
    check_high_order_admissible,
    high_order_flux_sequence,
    jump_energy,
    middle_theta,
    operator_norm,
    quadratic_form,
    semiboundedness_mu,
)
from .projections import (
    MeanZeroFunction,
    commuting_defect,
    composed_projection,
    d_theta_inverse_apply,
    d_theta_inverse_norm,
    make_mean_zero,
    pi_theta,
)
from .time_integration import (
    EvolveResult,
    RKScheme,
    StabilityWarning,
    amplification_norm,
    custom_rk,
    evolve,
    expm_reference,
    resolve_scheme,
    rk_step,
    sigma_factor,
    taylor_rk,
    two_step_rk4,
)
from .systems import (
    assemble_central_advection,
    assemble_energy_conserving_pair,
    assemble_wave_alphabeta,
    dual_mesh,
    split_fields,
    stack_fields,
)
from .multidim import (
    DGFunction2D,
    Mesh2D,
    assemble_advection_2d,
    l2_error_2d,
    pi_tensor_2d,
    project_l2_2d,
    tensor_projection_residuals,
)
from .spectral import (
    FourierFunction,
    SymbolOperator,
    analytic_profile,
    apply_symbol,
    finite_smoothness_coefficients,
    fourier_truncate,
    grid_l2_error,
    skewness_defect,
)
from .harness import (
    DEFAULT_SEED,
    CheckResult,
    LevelResult,
    ManufacturedSolution,
    RateAssertionError,
    StudyResult,
    build_operator,
    build_problem,
    check_operators,
    check_projections,
    fit_loglog,
    fit_semilog,
    format_checks,
    load_config,
    manufactured_residual,
    run_spatial,
    run_stability,
    run_study,
    run_temporal,
    solution_catalog,
    stability_budget,
    study_to_dict,
    validate_config,
    write_report,
)

__all__ = [
    "CheckResult",
    "ConfigError",
    "DEFAULT_SEED",
    "DGFunction",
    "DGFunction2D",
    "EvolveResult",
    "FourierFunction",
    "LevelResult",
    "LinearOperator",
    "ManufacturedSolution",
    "MeanZeroFunction",
    "Mesh1D",
    "Mesh2D",
    "NumericalError",
    "RKScheme",
    "RateAssertionError",
    "SmoothFunction",
    "StabilityWarning",
    "StudyResult",
    "SymbolOperator",
    "amplification_norm",
    "analytic_profile",
    "apply_symbol",
    "assemble_advection_2d",
    "assemble_central_advection",
    "assemble_d_theta",
    "assemble_energy_conserving_pair",
    "assemble_high_order_lh",
    "assemble_ultraweak_third",
    "assemble_wave_alphabeta",
    "build_operator",
    "build_problem",
    "check_high_order_admissible",
    "check_operators",
    "check_projections",
    "commuting_defect",
    "composed_projection",
    "custom_rk",
    "d_theta_inverse_apply",
    "d_theta_inverse_norm",
    "dual_mesh",
    "evolve",
    "expm_reference",
    "finite_smoothness_coefficients",
    "fit_loglog",
    "fit_semilog",
    "format_checks",
    "fourier_truncate",
    "gauss_rule",
    "grid_l2_error",
    "high_order_flux_sequence",
    "jump_energy",
    "l2_error",
    "l2_error_2d",
    "legendre_table",
    "load_config",
    "make_mean_zero",
    "manufactured_residual",
    "mean_value",
    "middle_theta",
    "operator_norm",
    "pi_tensor_2d",
    "pi_theta",
    "project_l2",
    "project_l2_2d",
    "quadratic_form",
    "resolve_scheme",
    "rk_step",
    "run_spatial",
    "run_stability",
    "run_study",
    "run_temporal",
    "semiboundedness_mu",
    "sigma_factor",
    "skewness_defect",
    "solution_catalog",
    "split_fields",
    "stability_budget",
    "stack_fields",
    "study_to_dict",
    "taylor_rk",
    "tensor_projection_residuals",
    "two_step_rk4",
    "validate_config",
    "write_report",
    "__version__",
]
