"""Deterministic spectral functionals: exact second moments by quadrature.

For a deterministic spatial profile Z the stochastic convolution against the
wave propagator is Gaussian, and all of its second moments reduce to

    integral over xi of |FZ(xi)|^2
        integral over mu(d_eta) of (1 + |xi-eta|^2)^alpha K(|xi-eta|^k)

with K one of the time-integrated kernels of .kernels.  Collapsing the xi
integral against the measure turns this into a single radial integral of
(1+w^2)^alpha K(w^k) against a smoothed measure profile, which is what the
radial engine evaluates.  The Gauss-Legendre time path (time_method="gauss")
integrates the fixed-time kernel numerically instead and exists to
cross-check the closed forms and to serve time-modulated profiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad as _scipy_quad

from ..errors import ConvergenceError, DomainError
from ..lattice import SpectralField, mode_radii
from ..model import (
    FiniteAtoms,
    RieszKernel,
    SpectralMeasure,
    is_zero_measure,
    radial_density_fn,
    origin_power,
    SPHERE_SURFACE,
)
from .kernels import (
    FixedTimeKernel,
    accumulated_kernel,
    constant_kernel,
    cross_kernel,
    fixed_time_kernel,
    increment_kernel,
)
from .radial import (
    PointWeight,
    QuadratureSettings,
    SmoothedWeight,
    condition_integral,
    integrate_kernel_weight,
)

__all__ = [
    "QuadratureSettings",
    "GaussianBump",
    "GridFunction",
    "DeterministicZ",
    "weighted_kernel_integral",
    "isometry_functional",
    "increasing_process",
    "increment_second_moment",
    "increment_cross_moment",
    "scaling_slope",
    "condition_integral",
    "shifted_condition_integral",
    "fit_loglog",
]


@dataclass(frozen=True)
class GaussianBump:
    """Z(x) = e^{-|x|^2/2}; |FZ(xi)|^2 = (2 pi)^d e^{-|xi|^2}, constant in time."""

    constant_in_time: bool = True


@dataclass(frozen=True)
class GridFunction:
    """Z given by its lattice spectrum (d = 1 only in the exact functionals)."""

    field: SpectralField
    constant_in_time: bool = True


DeterministicZ = Union[GaussianBump, GridFunction]


def _require_constant(z: DeterministicZ):
    if not z.constant_in_time:
        raise DomainError(
            "time-varying Z carries no time data; exact functionals support "
            "constant-in-time profiles only"
        )


# ---------------------------------------------------------------------------
# The eta-integral at a single frequency
# ---------------------------------------------------------------------------

def _atom_kernel_sum(measure: FiniteAtoms, kernel, alpha, k, xi):
    xi = np.asarray(xi, dtype=float).reshape(-1)
    total = 0.0
    for loc, mass in measure.atoms:
        diff = xi - np.asarray(loc, dtype=float)
        w = float(np.sqrt((diff * diff).sum()))
        total += mass * (1.0 + w * w) ** alpha * float(kernel.evaluate(np.asarray(w**k)))
    return total


def _shifted_kernel_d2(measure, kernel, alpha, k, rho, settings):
    """Spherical product rule in d = 2: radial x angular nested quadrature."""
    density = radial_density_fn(measure)

    def angular(w):
        if rho == 0.0:
            return 2.0 * math.pi * float(density(np.asarray([w]))[0])

        def f(phi):
            dist = math.sqrt(max((w - rho) ** 2 + 4.0 * w * rho * math.sin(phi / 2.0) ** 2, 0.0))
            return float(density(np.asarray([dist]))[0])

        val, _ = _scipy_quad(f, 0.0, math.pi, limit=200, points=[0.0],
                             epsabs=1e-13, epsrel=1e-9)
        return 2.0 * val

    def outer(w_arr):
        w_arr = np.asarray(w_arr, dtype=float)
        flat = w_arr.ravel()
        vals = np.array([
            angular(w) * w * (1.0 + w * w) ** alpha * float(kernel.evaluate(np.asarray(w**k)))
            if w > 1e-100 else 0.0
            for w in flat
        ])
        return vals.reshape(w_arr.shape)

    return _nested_radial_integral(outer, kernel, k, rho, measure, settings)


def _shifted_kernel_d3(measure, kernel, alpha, k, rho, settings):
    """d = 3 reduction: the angular integral is the measure's shell mass."""
    density = radial_density_fn(measure)

    if isinstance(measure, RieszKernel):
        b = measure.beta

        def shell_mass(lo, hi):
            c = measure.constant
            if b == 1.0:
                return c * np.log(hi / np.maximum(lo, 1e-300))
            return c * (hi ** (b - 1.0) - lo ** (b - 1.0)) / (b - 1.0)
    else:
        def shell_mass(lo, hi):
            out = np.empty_like(lo)
            for i, (a, b_) in enumerate(zip(lo.ravel(), hi.ravel())):
                val, _ = _scipy_quad(lambda r: float(density(np.asarray([r]))[0]) * r,
                                     a, b_, limit=200)
                out.ravel()[i] = val
            return out

    def outer(w_arr):
        w_arr = np.asarray(w_arr, dtype=float)
        if rho == 0.0:
            dens = density(w_arr.ravel()).reshape(w_arr.shape)
            return (SPHERE_SURFACE[3] * dens * w_arr**2
                    * (1.0 + w_arr**2) ** alpha * kernel.evaluate(w_arr**k))
        lo = np.abs(w_arr - rho)
        hi = w_arr + rho
        ring = (2.0 * math.pi / rho) * w_arr * shell_mass(lo, hi)
        return ring * (1.0 + w_arr**2) ** alpha * kernel.evaluate(w_arr**k)

    return _nested_radial_integral(outer, kernel, k, rho, measure, settings)


def _nested_radial_integral(outer, kernel, k, rho, measure, settings):
    from .radial import Panel, adaptive_integrate, _window_panels, _window_radius

    # the d-dimensional shell factor softens the density singularity
    p_int = max(0.0, origin_power(measure) - (measure.d - 1))
    sing = [(float(rho), min(p_int, 0.999))] if p_int > 0 else []
    w0 = _window_radius(kernel, k, settings, sing, hint=2.0 * rho + 16.0)
    panels = _window_panels(kernel, k, w0, sing)
    main, err, _ = adaptive_integrate(outer, panels, settings, tol_scale=2.0)

    # dc tail beyond w0: envelope ~ ring-average of the density
    q = 2.0 * k - (measure.beta if isinstance(measure, RieszKernel) else 0.0) + 1.0
    if q <= 1.0:
        raise ConvergenceError("shifted kernel tail does not converge")

    def mapped(u):
        u = np.asarray(u, dtype=float)
        w = w0 / u
        return outer(w) * w0 / (u * u)

    tail_panels = [Panel(1e-6, 0.25), Panel(0.25, 1.0)]
    tail, terr, _ = adaptive_integrate(mapped, tail_panels, settings, tol_scale=10.0)
    return main + tail


def weighted_kernel_integral(measure: SpectralMeasure, k: float, alpha: float,
                             s: float, xi, settings: Optional[QuadratureSettings] = None,
                             ) -> float:
    """J(xi, s) = int mu(d_eta) (1+|xi-eta|^2)^alpha sin^2(s|xi-eta|^k)/|xi-eta|^{2k}.

    Radial reduction at xi = 0 in every dimension; the shifted-radial rule in
    d = 1; the spherical product rule (slower, nested) for densities in
    d = 2, 3.  Finite atom lists evaluate in closed form for any xi.
    """
    if settings is None:
        settings = QuadratureSettings()
    if s < 0:
        raise DomainError(f"s must be >= 0, got {s}")
    kernel = fixed_time_kernel(s)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != measure.d:
        raise DomainError(f"xi has dimension {xi.size}, measure lives in d={measure.d}")
    if is_zero_measure(measure):
        return 0.0
    if isinstance(measure, FiniteAtoms):
        return _atom_kernel_sum(measure, kernel, alpha, k, xi)
    rho = float(np.sqrt((xi * xi).sum()))
    if measure.d == 1:
        weight = PointWeight(measure, rho)
        return integrate_kernel_weight(kernel, weight, alpha, k, settings)
    if rho == 0.0 or measure.d == 3:
        return _shifted_kernel_d3(measure, kernel, alpha, k, rho, settings) \
            if measure.d == 3 else _shifted_kernel_d2(measure, kernel, alpha, k, rho, settings)
    return _shifted_kernel_d2(measure, kernel, alpha, k, rho, settings)


def shifted_condition_integral(measure: SpectralMeasure, gamma_exp: float,
                               rho: float,
                               settings: Optional[QuadratureSettings] = None,
                               ) -> float:
    """int mu(d_eta) / (1 + |xi - eta|^2)^gamma at |xi| = rho (d = 1 densities,
    atoms in any dimension)."""
    if settings is None:
        settings = QuadratureSettings()
    if is_zero_measure(measure):
        return 0.0
    if isinstance(measure, FiniteAtoms):
        total = 0.0
        for loc, mass in measure.atoms:
            loc = np.asarray(loc, dtype=float)
            center = np.zeros_like(loc)
            center[0] = rho
            w2 = float(((loc - center) ** 2).sum())
            total += mass / (1.0 + w2) ** gamma_exp
        return total
    weight = PointWeight(measure, rho)
    return integrate_kernel_weight(constant_kernel(), weight, -gamma_exp, 1.0, settings)


# ---------------------------------------------------------------------------
# Z-weighted functionals
# ---------------------------------------------------------------------------

def _grid_radii_weights(field: SpectralField) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct mode radii with their summed Riemann weights dxi^d |FZ|^2
    (the xi-integral in the functionals carries a plain Lebesgue measure).

    Radii are kept as exact floats: equal lattice radii are bitwise equal,
    and exactness keeps singular-panel anchors aligned with oscillation
    breakpoints downstream.
    """
    grid = field.grid
    radii = mode_radii(grid).ravel()
    mass = (np.abs(field.coefficients.ravel()) ** 2) * grid.dxi**grid.d
    order = np.argsort(radii)
    radii, mass = radii[order], mass[order]
    uniq, start = np.unique(radii, return_index=True)
    sums = np.add.reduceat(mass, start)
    keep = sums > 0.0
    return uniq[keep], sums[keep]


def _z_weighted_integral(measure, k, alpha, z, kernel, settings) -> float:
    _require_constant(z)
    if is_zero_measure(measure):
        return 0.0
    if isinstance(z, GaussianBump):
        weight = SmoothedWeight(measure, measure.d)
        return integrate_kernel_weight(kernel, weight, alpha, k, settings)
    if not isinstance(z, GridFunction):
        raise DomainError(f"unsupported Z profile {type(z).__name__}")
    grid = z.field.grid
    if grid.d != 1 or measure.d != 1:
        raise DomainError("GridFunction Z is supported in d = 1 only")
    radii, weights = _grid_radii_weights(z.field)
    total = 0.0
    for rho, wgt in zip(radii, weights):
        if isinstance(measure, FiniteAtoms):
            total += wgt * _atom_kernel_sum(measure, kernel, alpha, k, np.asarray([rho]))
        else:
            total += wgt * integrate_kernel_weight(
                kernel, PointWeight(measure, float(rho)), alpha, k, settings)
    return total


def _gauss_legendre_time(measure, k, alpha, z, t_lo, t_hi, settings,
                         reversed_kernel: bool, horizon: float) -> float:
    """Time integral by Gauss-Legendre, 64 nodes per unit time, doubled."""
    value_prev = None
    n = max(64, int(64 * max(t_hi - t_lo, 1.0)))
    for _ in range(6):
        nodes, weights = np.polynomial.legendre.leggauss(n)
        s = 0.5 * (t_hi + t_lo) + 0.5 * (t_hi - t_lo) * nodes
        w = 0.5 * (t_hi - t_lo) * weights
        total = 0.0
        for si, wi in zip(s, w):
            arg = (horizon - si) if reversed_kernel else si
            total += wi * _z_weighted_integral(
                measure, k, alpha, z, fixed_time_kernel(arg), settings)
        if value_prev is not None and abs(total - value_prev) <= max(
                settings.abs_tol, settings.rel_tol * abs(total)):
            return total
        value_prev = total
        n *= 2
    return value_prev


def isometry_functional(measure: SpectralMeasure, k: float, alpha: float,
                        z: DeterministicZ, T: float, reversed: bool = False,
                        settings: Optional[QuadratureSettings] = None,
                        time_method: str = "auto") -> float:
    """Exact E || stochastic convolution at time T ||_{H^alpha}^2.

    reversed=False integrates the propagator at elapsed time s (the
    martingale form); reversed=True at T - s (the solution form).  For
    constant-in-time Z the two coincide and the closed-form time integral is
    used; time_method="gauss" forces the doubling Gauss-Legendre rule
    instead (cross-check path).
    """
    if settings is None:
        settings = QuadratureSettings()
    if T < 0:
        raise DomainError(f"T must be >= 0, got {T}")
    if T == 0.0:
        return 0.0
    _require_constant(z)
    if time_method == "gauss":
        return _gauss_legendre_time(measure, k, alpha, z, 0.0, T, settings,
                                    reversed_kernel=reversed, horizon=T)
    if time_method != "auto":
        raise DomainError(f"unknown time_method {time_method!r}")
    return _z_weighted_integral(measure, k, alpha, z, accumulated_kernel(T), settings)


def increasing_process(measure: SpectralMeasure, k: float, alpha: float,
                       z: DeterministicZ, t: float,
                       settings: Optional[QuadratureSettings] = None) -> float:
    """Compensator value <v>_t of the H^alpha-norm-squared martingale."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return 0.0
    return _z_weighted_integral(measure, k, alpha, z, accumulated_kernel(t), settings)


def increment_second_moment(measure: SpectralMeasure, k: float, alpha: float,
                            z: DeterministicZ, t1: float, t2: float,
                            settings: Optional[QuadratureSettings] = None) -> float:
    """Exact E || u(t2) - u(t1) ||_{H^alpha}^2 for constant-in-time Z.

    The time integral of the squared multiplier difference over [0, t1] and
    of the fresh-noise block over [t1, t2] is carried in closed form.
    """
    if not 0.0 <= t1 <= t2:
        raise DomainError(f"need 0 <= t1 <= t2, got {t1}, {t2}")
    if t1 == t2:
        return 0.0
    return _z_weighted_integral(measure, k, alpha, z, increment_kernel(t1, t2), settings)


def increment_cross_moment(measure: SpectralMeasure, k: float, alpha: float,
                           z: DeterministicZ, t1: float, t2: float,
                           settings: Optional[QuadratureSettings] = None) -> float:
    """Exact E < u(t1), u(t2) >_{H^alpha} (shared-noise covariance)."""
    if not 0.0 <= t1 <= t2:
        raise DomainError(f"need 0 <= t1 <= t2, got {t1}, {t2}")
    if t1 == 0.0:
        return 0.0
    return _z_weighted_integral(measure, k, alpha, z, cross_kernel(t1, t2), settings)


# ---------------------------------------------------------------------------
# Scaling slope
# ---------------------------------------------------------------------------

def fit_loglog(lags: Sequence[float], values: Sequence[float],
               ) -> Tuple[float, float, float]:
    """Least-squares slope, intercept and rms residual of log values vs log lags."""
    lags = np.asarray(lags, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0.0) or np.any(~np.isfinite(values)):
        raise ConvergenceError("degenerate fit: non-positive or non-finite moments")
    x = np.log(lags)
    y = np.log(values)
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((y - design @ [slope, intercept]) ** 2)))
    return float(slope), float(intercept), residual


def scaling_slope(measure: SpectralMeasure, k: float, alpha: float,
                  z: DeterministicZ, t1: float, lags: Sequence[float],
                  settings: Optional[QuadratureSettings] = None,
                  moments: Optional[Sequence[float]] = None,
                  ) -> Tuple[float, float, float]:
    """Log-log slope of the exact increment second moment against the lag.

    Pass precomputed moments to bypass quadrature (regression self-test
    hook).  Returns (slope, intercept, rms residual).
    """
    lags = list(lags)
    if len(lags) < 4:
        raise DomainError(f"need at least 4 lags, got {len(lags)}")
    if any(h <= 0 for h in lags):
        raise DomainError("lags must be positive")
    if moments is None:
        moments = [
            increment_second_moment(measure, k, alpha, z, t1, t1 + h, settings)
            for h in lags
        ]
    return fit_loglog(lags, moments)
