"""Problem parameters, spectral measures, integrability conditions, exponents.

The spectral measure mu of the driving noise is the object every
regularity statement interrogates: the solution lives in the Sobolev
space of order alpha exactly when the weighted integral

    integral  mu(d_xi) / (1 + |xi|^2)^(k - alpha)

is finite.  For a Riesz covariance |x|^(-beta) the measure has the radial
density C |xi|^(beta - d) and the condition reduces to beta < 2(k - alpha),
which is what the analytic fast path below uses; everything else goes
through radial quadrature with power-law divergence detection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma as _gamma_fn

from .errors import DomainError

SUPPORTED_DIMENSIONS = (1, 2, 3)

# Surface measure of the unit sphere S^{d-1} for d = 1, 2, 3.
SPHERE_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class ModelParams:
    """Fractional order k, spatial dimension d and time horizon T."""

    k: float
    d: int
    T: float

    def __post_init__(self):
        if not self.k > 0:
            raise DomainError(f"k must be positive, got {self.k}")
        if self.d not in SUPPORTED_DIMENSIONS:
            raise DomainError(f"d must be one of {SUPPORTED_DIMENSIONS}, got {self.d}")
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T}")


# ---------------------------------------------------------------------------
# Spectral measures
# ---------------------------------------------------------------------------

def riesz_constant(d: int, beta: float) -> float:
    """Classical normalization of the Fourier pair |x|^(-beta) <-> C |xi|^(beta-d).

    C = 2^(d-beta) pi^(d/2) Gamma((d-beta)/2) / Gamma(beta/2) under the
    e^{i xi x} transform convention used throughout the package.
    """
    return (
        2.0 ** (d - beta)
        * math.pi ** (d / 2.0)
        * _gamma_fn((d - beta) / 2.0)
        / _gamma_fn(beta / 2.0)
    )


@dataclass(frozen=True)
class RieszKernel:
    """Radial density constant * |xi|^(beta - d) with 0 < beta < d.

    beta == d is admitted as the degenerate boundary (flat spectrum, white
    spatial noise); it has no classical normalization, so the constant must
    then be given explicitly.
    """

    beta: float
    d: int
    constant: float

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMENSIONS:
            raise DomainError(f"d must be one of {SUPPORTED_DIMENSIONS}, got {self.d}")
        if not 0.0 < self.beta <= self.d:
            raise DomainError(
                f"Riesz exponent beta must lie in (0, d] = (0, {self.d}], got {self.beta}"
            )
        if not self.constant > 0:
            raise DomainError(f"constant must be positive, got {self.constant}")

    def density(self, r):
        r = np.asarray(r, dtype=float)
        return self.constant * r ** (self.beta - self.d)


@dataclass(frozen=True)
class RadialDensity:
    """Radial Lebesgue density r -> m(r) >= 0; vectorized callable expected.

    origin_power p marks a known power-law singularity m(r) ~ r^(-p) at the
    origin so that quadrature can absorb it exactly; leave None for densities
    bounded near zero.
    """

    density: Callable[[np.ndarray], np.ndarray]
    d: int
    origin_power: Optional[float] = None

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMENSIONS:
            raise DomainError(f"d must be one of {SUPPORTED_DIMENSIONS}, got {self.d}")
        if self.origin_power is not None and not self.origin_power < self.d:
            raise DomainError("origin_power must be < d for a locally finite measure")


@dataclass(frozen=True)
class FiniteAtoms:
    """Finite list of point masses (location_vector, mass >= 0)."""

    atoms: Tuple[Tuple[Tuple[float, ...], float], ...]
    d: int

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMENSIONS:
            raise DomainError(f"d must be one of {SUPPORTED_DIMENSIONS}, got {self.d}")
        for loc, mass in self.atoms:
            if len(loc) != self.d:
                raise DomainError(f"atom location {loc} does not have dimension {self.d}")
            if mass < 0:
                raise DomainError(f"atom masses must be non-negative, got {mass}")

    @staticmethod
    def of(atoms: Sequence[Tuple[Sequence[float], float]], d: Optional[int] = None) -> "FiniteAtoms":
        atoms = tuple((tuple(float(c) for c in loc), float(m)) for loc, m in atoms)
        if d is None:
            if not atoms:
                raise DomainError("cannot infer dimension from an empty atom list")
            d = len(atoms[0][0])
        return FiniteAtoms(atoms=atoms, d=d)

    def radii(self) -> np.ndarray:
        return np.array([math.hypot(*loc) if len(loc) > 1 else abs(loc[0]) for loc, _ in self.atoms])

    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])


@dataclass(frozen=True)
class FlatDensity:
    """Constant Lebesgue density level >= 0 (level 0 is the zero measure)."""

    level: float
    d: int

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMENSIONS:
            raise DomainError(f"d must be one of {SUPPORTED_DIMENSIONS}, got {self.d}")
        if self.level < 0:
            raise DomainError(f"level must be non-negative, got {self.level}")


SpectralMeasure = Union[RieszKernel, RadialDensity, FiniteAtoms, FlatDensity]


def riesz_measure(beta: float, d: int, constant: Optional[float] = None) -> RieszKernel:
    """Riesz spectral measure with density C |xi|^(beta-d).

    When constant is omitted the classical Fourier-pair normalization
    riesz_constant(d, beta) is used; every scaling exponent downstream is
    independent of this choice.  At the degenerate boundary beta == d the
    classical constant does not exist, so 1.0 is used unless given.
    """
    if not 0.0 < beta <= d:
        raise DomainError(f"beta must lie in (0, d] = (0, {d}], got {beta}")
    if constant is None:
        constant = 1.0 if beta == d else riesz_constant(d, beta)
    return RieszKernel(beta=beta, d=d, constant=float(constant))


def radial_density_fn(measure: SpectralMeasure) -> Callable[[np.ndarray], np.ndarray]:
    """Radial Lebesgue density of a non-atomic measure."""
    if isinstance(measure, RieszKernel):
        return measure.density
    if isinstance(measure, RadialDensity):
        return lambda r: np.asarray(measure.density(np.asarray(r, dtype=float)), dtype=float)
    if isinstance(measure, FlatDensity):
        return lambda r: np.full_like(np.asarray(r, dtype=float), measure.level)
    raise DomainError(f"{type(measure).__name__} has no radial density")


def origin_power(measure: SpectralMeasure) -> float:
    """Exponent p of the density's r^(-p) behaviour at the origin (0 if bounded)."""
    if isinstance(measure, RieszKernel):
        return measure.d - measure.beta
    if isinstance(measure, RadialDensity) and measure.origin_power is not None:
        return measure.origin_power
    return 0.0


def is_zero_measure(measure: SpectralMeasure) -> bool:
    if isinstance(measure, FlatDensity):
        return measure.level == 0.0
    if isinstance(measure, FiniteAtoms):
        return len(measure.atoms) == 0 or float(measure.masses().sum()) == 0.0
    return False


# ---------------------------------------------------------------------------
# Condition reports
# ---------------------------------------------------------------------------

DALANG_CONDITION = "Dalang_1_5"
ETA_CONDITION = "Eta_2_5_0"


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of one integrability check.

    holds is meaningful only when status == "ok"; an "inconclusive" report
    carries value = nan.  The invariant holds == (value < inf) is preserved
    for decided reports.
    """

    condition_id: str
    value: float
    holds: bool
    method: str  # "analytic" | "quadrature"
    tolerance_used: float
    status: str = "ok"  # "ok" | "inconclusive"


@dataclass(frozen=True)
class SmoothnessQuery:
    """Exponent query: Sobolev order alpha, time exponent eta, initial-data
    smoothness delta (position) and gamma_ic (velocity), moment order q."""

    alpha: float
    eta: float
    delta: float = 1.0
    gamma_ic: float = 0.0
    q: float = math.inf

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.eta < 1.0:
            raise DomainError(f"eta must lie in (0, 1), got {self.eta}")
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        if not 0.0 <= self.gamma_ic < 1.0:
            raise DomainError(f"gamma_ic must lie in [0, 1), got {self.gamma_ic}")
        if not self.q >= 2:
            raise DomainError(f"q must be >= 2, got {self.q}")


@dataclass(frozen=True)
class ExponentReport:
    """Every closed-form exponent predicted for a configuration."""

    alpha_max: float
    theta0: float
    theta1: Optional[float]
    moment_slope: Optional[float]
    time_holder_sup: float
    spatial_holder_sup: Optional[float]


# ---------------------------------------------------------------------------
# Condition checkers
# ---------------------------------------------------------------------------

def _analytic_condition_value(measure: SpectralMeasure, gamma_exp: float):
    """(value, holds) for measures with closed-form answers, else None."""
    if isinstance(measure, FiniteAtoms):
        radii = measure.radii()
        value = float((measure.masses() / (1.0 + radii**2) ** gamma_exp).sum())
        return value, True
    if isinstance(measure, RieszKernel):
        holds = measure.beta < 2.0 * gamma_exp
        if not holds:
            return math.inf, False
        # S_{d-1} c/2 * B(beta/2, gamma - beta/2)
        b = measure.beta
        value = (
            SPHERE_SURFACE[measure.d]
            * measure.constant
            * 0.5
            * _gamma_fn(b / 2.0)
            * _gamma_fn(gamma_exp - b / 2.0)
            / _gamma_fn(gamma_exp)
        )
        return float(value), True
    return None


def _check_condition(measure, gamma_exp, condition_id, settings, method):
    from .quadrature import QuadratureSettings, condition_integral

    if settings is None:
        settings = QuadratureSettings()
    if is_zero_measure(measure):
        return ConditionReport(condition_id, 0.0, True, "analytic", settings.rel_tol)

    if method == "auto":
        method = "analytic" if _analytic_condition_value(measure, gamma_exp) is not None else "quadrature"
    if method == "analytic":
        analytic = _analytic_condition_value(measure, gamma_exp)
        if analytic is None:
            raise DomainError(f"no analytic rule for {type(measure).__name__}")
        value, holds = analytic
        return ConditionReport(condition_id, value, holds, "analytic", settings.rel_tol)

    from .errors import ConvergenceError

    try:
        value, verdict = condition_integral(measure, gamma_exp, settings)
    except ConvergenceError:
        verdict = "inconclusive"
    if verdict == "inconclusive":
        return ConditionReport(condition_id, math.nan, False, "quadrature",
                               settings.rel_tol, status="inconclusive")
    holds = verdict == "finite"
    return ConditionReport(condition_id, value if holds else math.inf, holds,
                           "quadrature", settings.rel_tol)


def check_dalang_condition(measure: SpectralMeasure, k: float, alpha: float,
                           settings=None, method: str = "auto") -> ConditionReport:
    """Check integral of mu(d_xi)/(1+|xi|^2)^(k-alpha) for finiteness.

    Riesz measures and finite atom lists use closed forms; densities go
    through radial quadrature with truncation-growth divergence detection.
    Pass method="quadrature" to force the numeric path (used to validate the
    analytic rule).
    """
    if not k > alpha >= 0:
        raise DomainError(f"need k > alpha >= 0, got k={k}, alpha={alpha}")
    return _check_condition(measure, k - alpha, DALANG_CONDITION, settings, method)


def check_eta_condition(measure: SpectralMeasure, k: float, alpha: float, eta: float,
                        settings=None, method: str = "auto") -> ConditionReport:
    """Check integral of mu(d_xi)/(1+|xi|^2)^(k*eta - alpha), eta in (alpha/k, 1)."""
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not eta < 1.0:
        raise DomainError(f"eta must be < 1, got {eta}")
    if not eta > alpha / k:
        raise DomainError(f"eta must exceed alpha/k = {alpha / k}, got {eta}")
    return _check_condition(measure, k * eta - alpha, ETA_CONDITION, settings, method)


def max_alpha(measure: SpectralMeasure, k: float, settings=None,
              bisection_tol: float = 1e-3) -> float:
    """Supremum of Sobolev orders alpha with the weighted integral finite.

    Riesz: k - beta/2 in closed form.  Atoms: k (the integrand stays bounded
    for every alpha < k).  Densities: bisection over alpha against
    check_dalang_condition.
    """
    if isinstance(measure, RieszKernel):
        value = k - measure.beta / 2.0
        return max(value, 0.0)
    if isinstance(measure, FiniteAtoms):
        return float(k)
    if is_zero_measure(measure):
        return float(k)
    base = check_dalang_condition(measure, k, 0.0, settings)
    if not base.holds:
        return 0.0
    lo, hi = 0.0, float(k)
    while hi - lo > bisection_tol:
        mid = 0.5 * (lo + hi)
        if mid >= k:
            break
        report = check_dalang_condition(measure, k, mid, settings)
        if report.status == "ok" and report.holds:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Exponent calculators
# ---------------------------------------------------------------------------

def holder_exponents(params: ModelParams, measure: SpectralMeasure,
                     query: SmoothnessQuery, settings=None) -> ExponentReport:
    """Closed-form regularity exponents for one configuration.

    theta0 = min(1/2, 1-eta, delta, 1-gamma_ic) always; the sharper
    theta1 = min(1 - (beta+2*alpha)/(2k), delta, 1-gamma_ic) and the
    second-moment slope 2 - (beta+2*alpha)/k exist for Riesz measures only.
    time_holder_sup carries the -1/q Kolmogorov correction; the spatial
    exponent alpha - d/2 is reported only when positive.
    """
    k, d = params.k, params.d
    alpha, eta, delta, gamma_ic, q = (
        query.alpha, query.eta, query.delta, query.gamma_ic, query.q,
    )
    if not alpha < k:
        raise DomainError(f"alpha must be < k = {k}, got {alpha}")
    if not eta > alpha / k:
        raise DomainError(f"eta must exceed alpha/k = {alpha / k}, got {eta}")

    theta0 = min(0.5, 1.0 - eta, delta, 1.0 - gamma_ic)
    stochastic_rate = min(0.5, 1.0 - eta)

    theta1 = None
    moment_slope = None
    if isinstance(measure, RieszKernel):
        beta = measure.beta
        riesz_rate = 1.0 - (beta + 2.0 * alpha) / (2.0 * k)
        if riesz_rate > 0:
            theta1 = min(riesz_rate, delta, 1.0 - gamma_ic)
            moment_slope = 2.0 - (beta + 2.0 * alpha) / k
            stochastic_rate = max(stochastic_rate, riesz_rate)

    correction = 0.0 if math.isinf(q) else 1.0 / q
    time_holder_sup = stochastic_rate - correction

    spatial = alpha - d / 2.0
    spatial_holder_sup = spatial if spatial > 0 else None

    return ExponentReport(
        alpha_max=max_alpha(measure, k, settings),
        theta0=theta0,
        theta1=theta1,
        moment_slope=moment_slope,
        time_holder_sup=time_holder_sup,
        spatial_holder_sup=spatial_holder_sup,
    )
