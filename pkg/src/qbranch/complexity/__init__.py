"""Trajectories, Schmidt-angle audits, analytic bounds and the complexity optimizer."""

from .bounds import (
    LAMBDA_LIMIT,
    build_extended_trajectory,
    build_point_pair_trajectory,
    entangler,
    hop,
    kappa,
    kappa_limit,
    lambda_,
    lower_bound_extended,
    lower_bound_point_pair,
    omega,
    omega_branches,
    omega_prime,
    psi_upper_bound,
    upper_bound_extended,
    upper_bound_point_pair,
)
from .optimize import (
    ComplexityEstimate,
    OptimizerConfig,
    best_product_fit,
    complexity_of_state,
    endpoint_lower_bound,
    optimize_complexity,
    pair_product_test,
    product_amplitudes,
    product_surrogate,
)
from .schmidt import (
    RotationAudit,
    RotationRates,
    SchmidtSpectrum,
    angle_audit,
    endpoint_angles,
    product_angle,
    rate_constant,
    rotation_rates,
    schmidt_spectrum,
)
from .trajectory import ControlTrajectory, cost, evolve, overlap

__all__ = [name for name in dir() if not name.startswith("_")]
