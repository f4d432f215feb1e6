"""Deterministic spectral functionals evaluated by radial quadrature."""

from .functionals import (
    DeterministicZ,
    GaussianBump,
    GridFunction,
    QuadratureSettings,
    condition_integral,
    fit_loglog,
    increasing_process,
    increment_cross_moment,
    increment_second_moment,
    isometry_functional,
    scaling_slope,
    shifted_condition_integral,
    weighted_kernel_integral,
)
from .kernels import (
    accumulated_kernel,
    cross_kernel,
    fixed_time_kernel,
    increment_kernel,
    sin_sq_time_integral,
)
from .radial import (
    PointWeight,
    SmoothedWeight,
    adaptive_integrate,
    integrate_kernel_weight,
)

__all__ = [
    "DeterministicZ",
    "GaussianBump",
    "GridFunction",
    "QuadratureSettings",
    "condition_integral",
    "fit_loglog",
    "increasing_process",
    "increment_cross_moment",
    "increment_second_moment",
    "isometry_functional",
    "scaling_slope",
    "shifted_condition_integral",
    "weighted_kernel_integral",
    "accumulated_kernel",
    "cross_kernel",
    "fixed_time_kernel",
    "increment_kernel",
    "sin_sq_time_integral",
    "PointWeight",
    "SmoothedWeight",
    "adaptive_integrate",
    "integrate_kernel_weight",
]
