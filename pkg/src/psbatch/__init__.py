"""Sojourn times of entire batches in a processor-sharing queue.

Jobs arrive in geometrically sized batches at a single unit-rate
processor-sharing server; this package computes the Laplace transform,
the mean, and (by numerical inversion) the tail distribution of the time
until the last job of an arriving batch departs, together with two
independent ground truths: a truncated solve of the underlying conditional
recurrence and a Monte Carlo simulator of the tagged batch.
"""

from .errors import (
    ConvergenceError,
    DomainError,
    InversionUnstable,
    NonFiniteIntegrand,
    PoleError,
    PsbatchError,
    RadiusError,
    SingularDiagonal,
    StabilityViolation,
    ToleranceNotMet,
    TruncationWarning,
)
from .model import (
    ModelParams,
    SpectralData,
    StationaryLaw,
    batch_pmf,
    characteristic_Z,
    kernel_R,
    spectral,
    validate_params,
)
from .oracle import (
    ConditionalTable,
    aggregate_lst,
    aggregate_mean,
    column_generating,
    generating_value,
    solve_conditional_lst,
    solve_conditional_means,
)
from .sim import (
    EcdfCurve,
    SimEstimate,
    dkw_band,
    ecdf_ccdf,
    simulate_batch_sojourn,
    simulate_job_sojourn,
)
from .solver import (
    AuxPolynomials,
    CcdfCurve,
    E1_qv,
    E_qv,
    E_uv,
    F1_at_rho_plus_q,
    F_at_zero,
    F_uv,
    TransformValue,
    batch_lst,
    batch_lst_analytic,
    ccdf,
    mean_batch_sojourn,
    pde_residual,
    stehfest_weights,
)
from .triangular import (
    CoefficientTable,
    coefficient_Fb,
    condanalytic_residual,
    default_b_max,
    q_coefficient,
    q_coefficient_closed,
    rhs_lst,
    rhs_mean,
    solve_boundary_lst,
    solve_boundary_mean,
)

__version__ = "0.1.0"

__all__ = [
    "AuxPolynomials",
    "CcdfCurve",
    "CoefficientTable",
    "ConditionalTable",
    "ConvergenceError",
    "DomainError",
    "E1_qv",
    "E_qv",
    "E_uv",
    "EcdfCurve",
    "F1_at_rho_plus_q",
    "F_at_zero",
    "F_uv",
    "InversionUnstable",
    "ModelParams",
    "NonFiniteIntegrand",
    "PoleError",
    "PsbatchError",
    "RadiusError",
    "SimEstimate",
    "SingularDiagonal",
    "SpectralData",
    "StabilityViolation",
    "StationaryLaw",
    "ToleranceNotMet",
    "TransformValue",
    "TruncationWarning",
    "aggregate_lst",
    "aggregate_mean",
    "batch_lst",
    "batch_lst_analytic",
    "batch_pmf",
    "ccdf",
    "characteristic_Z",
    "coefficient_Fb",
    "column_generating",
    "condanalytic_residual",
    "default_b_max",
    "dkw_band",
    "ecdf_ccdf",
    "generating_value",
    "kernel_R",
    "mean_batch_sojourn",
    "pde_residual",
    "q_coefficient",
    "q_coefficient_closed",
    "rhs_lst",
    "rhs_mean",
    "simulate_batch_sojourn",
    "simulate_job_sojourn",
    "solve_boundary_lst",
    "solve_boundary_mean",
    "solve_conditional_lst",
    "solve_conditional_means",
    "spectral",
    "stehfest_weights",
    "validate_params",
]
