"""fracwave: spectral simulation and verification lab for the stochastic
fractional wave equation driven by spatially homogeneous Gaussian noise.

The package has two halves that check each other:

* exact side -- closed-form exponents, integrability conditions and
  second-moment functionals evaluated by radial quadrature (model,
  propagator, quadrature);
* sampled side -- periodic-lattice simulation of solution paths with a
  per-mode-exact stochastic integrator plus Monte-Carlo estimators of the
  same quantities (lattice, noise, solver, estimators).

The acceptance module wires the two sides together; the cli module runs
experiments from JSON configs.
"""

__version__ = "0.1.0"

from . import acceptance, cli, estimators, lattice, model, noise, propagator, quadrature, solver
from .errors import BlowUpError, ConfigError, ConvergenceError, DomainError, FracwaveError

__all__ = [
    "__version__",
    "acceptance",
    "cli",
    "estimators",
    "lattice",
    "model",
    "noise",
    "propagator",
    "quadrature",
    "solver",
    "BlowUpError",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "FracwaveError",
]
