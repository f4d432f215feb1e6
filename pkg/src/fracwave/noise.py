"""Lattice sampling of the white-in-time spatially homogeneous noise.

Mode amplitudes are square roots of the cell masses of the spectral
measure; a noise increment is synthesized as

    dW(x_m) = (2 pi)^{d/2} sum_j h_j e^{-i xi_j x_m},
    h_j = amplitude_j sqrt(dt) g_j,

with g_j complex standard Gaussians under Hermitian symmetry (real
Gaussians on self-conjugate modes).  The (2 pi)^{d/2} synthesis factor is
the normalization contract of this package: with it, the simulated second
moments of stochastic convolutions reproduce the exact spectral functionals
of the quadrature module, whose xi-integrals carry a plain Lebesgue measure
(the Sobolev norms, by contrast, fold the Plancherel (2 pi)^{-d} into their
mode sums, and the factor here is what reconciles the two conventions).
Equivalently, the sampled field has spatial covariance (2 pi)^d dt Gamma in
the classical normalization Gamma(z) = integral e^{i z eta} mu(d eta).

Streams are counter-based: Philox keyed by (master seed, path index) with
the step index in the counter's high word, so any (path, step) increment
can be regenerated independently and collision-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError
from .lattice import GridSpec, transform
from .model import (
    FiniteAtoms,
    FlatDensity,
    RadialDensity,
    RieszKernel,
    SPHERE_SURFACE,
    SpectralMeasure,
    is_zero_measure,
)


def stream(seed: int, path_index: int, step_index: int) -> np.random.Generator:
    """Independent generator for one (path, step) noise increment."""
    bit_gen = np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index], dtype=np.uint64),
        counter=np.array([0, 0, 0, step_index], dtype=np.uint64),
    )
    return np.random.Generator(bit_gen)


# ---------------------------------------------------------------------------
# Cell masses
# ---------------------------------------------------------------------------

def _riesz_cell_mass_1d(measure: RieszKernel, centers: np.ndarray, half: float) -> np.ndarray:
    """Exact mass of [c-h, c+h] under the density const |xi|^(beta-1), d=1."""
    b = measure.beta
    lo = centers - half
    hi = centers + half

    def anti(x):
        return np.sign(x) * np.abs(x) ** b / b

    return measure.constant * (anti(hi) - anti(lo))


def _equivalent_ball_radius(d: int, dxi: float) -> float:
    """Radius of the ball with the same volume as the cubic cell."""
    if d == 1:
        return dxi / 2.0
    if d == 2:
        return dxi / math.sqrt(math.pi)
    return dxi * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)


def mode_amplitudes(measure: SpectralMeasure, grid: GridSpec) -> np.ndarray:
    """Per-mode amplitudes: amplitude(j)^2 = mu-mass of the cell at xi_j.

    Singular densities are cell-averaged: the origin cell takes the exact
    radial integral over the volume-equivalent ball, never a point value.
    Atom lists are snapped to their nearest cells and symmetrized so the
    sampled field stays real.
    """
    if measure.d != grid.d:
        raise DomainError(
            f"measure dimension {measure.d} does not match grid dimension {grid.d}"
        )
    dxi = grid.dxi
    shape = grid.shape
    freqs = grid.axis_frequencies()

    if isinstance(measure, FlatDensity):
        masses = np.full(shape, measure.level * dxi**grid.d)
        return np.sqrt(masses)

    if isinstance(measure, FiniteAtoms):
        masses = np.zeros(shape)
        n = grid.N
        for loc, mass in measure.atoms:
            idx = tuple(int(np.round(c / dxi)) % n for c in loc)
            for c, i in zip(loc, idx):
                j = i if i < n // 2 else i - n
                if abs(c / dxi - j) > 0.5 + 1e-9:
                    raise DomainError(f"atom at {loc} falls outside the mode lattice")
            masses[idx] += mass
        sym = masses
        for ax in range(grid.d):
            sym = np.flip(np.roll(sym, -1, axis=ax), axis=ax)
        masses = 0.5 * (masses + sym)
        return np.sqrt(masses)

    mesh = np.meshgrid(*([freqs] * grid.d), indexing="ij")
    radius = np.sqrt(sum(m * m for m in mesh))

    if isinstance(measure, RieszKernel) and grid.d == 1:
        masses = _riesz_cell_mass_1d(measure, mesh[0], dxi / 2.0)
        return np.sqrt(masses)

    if isinstance(measure, RieszKernel):
        dens = np.where(radius > 0, radius, 1.0) ** (measure.beta - measure.d)
        masses = measure.constant * dens * dxi**grid.d
        r_eq = _equivalent_ball_radius(grid.d, dxi)
        origin_mass = (
            measure.constant
            * SPHERE_SURFACE[grid.d]
            * r_eq**measure.beta
            / measure.beta
        )
        masses[(0,) * grid.d] = origin_mass
        return np.sqrt(masses)

    if isinstance(measure, RadialDensity):
        dens = np.asarray(measure.density(np.where(radius > 0, radius, 1.0)), dtype=float)
        masses = dens * dxi**grid.d
        r_eq = _equivalent_ball_radius(grid.d, dxi)
        from scipy.integrate import quad

        ball, _ = quad(
            lambda r: float(measure.density(np.asarray([r]))[0]) * r ** (grid.d - 1),
            0.0, r_eq, limit=200,
        )
        masses[(0,) * grid.d] = SPHERE_SURFACE[grid.d] * ball
        if np.any(masses < 0):
            raise DomainError("density produced negative cell masses")
        return np.sqrt(masses)

    raise DomainError(f"unsupported measure type {type(measure).__name__}")


@dataclass(frozen=True)
class NoiseSpec:
    """Immutable noise sampler inputs: measure, grid, per-mode amplitudes."""

    measure: SpectralMeasure
    grid: GridSpec
    amplitudes: np.ndarray

    @staticmethod
    def build(measure: SpectralMeasure, grid: GridSpec) -> "NoiseSpec":
        return NoiseSpec(measure=measure, grid=grid,
                         amplitudes=mode_amplitudes(measure, grid))


@dataclass(frozen=True)
class NoiseIncrement:
    """One sampled increment: real field, its spectral draws, and dt."""

    field: np.ndarray
    coefficients: np.ndarray
    dt: float


# ---------------------------------------------------------------------------
# Hermitian-symmetric sampling
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _mirror_indices(grid: GridSpec):
    """Index array mapping mode j -> -j, plus self-conjugate mask."""
    n = grid.N
    rev = (-np.arange(n)) % n
    idx = np.ix_(*([rev] * grid.d)) if grid.d > 1 else (rev,)
    ints = np.meshgrid(*([grid.axis_modes()] * grid.d), indexing="ij")
    self_conj = np.ones(grid.shape, dtype=bool)
    for m in ints:
        self_conj &= (m == 0) | (m == -n // 2)
    return idx, self_conj


def _hermitian_gaussians(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance complex Gaussians with h(-j) = conj(h(j))."""
    shape = grid.shape
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    z = (re + 1j * im) / np.sqrt(2.0)
    idx, self_conj = _mirror_indices(grid)
    # pairing keeps unit variance: (z_j + conj(z_-j))/sqrt(2); at self-conjugate
    # modes this collapses to sqrt(2) Re(z_j), again unit variance and real
    z = (z + np.conj(z[idx])) / np.sqrt(2.0)
    z[self_conj] = z[self_conj].real
    return z


def synthesize(grid: GridSpec, coefficients: np.ndarray) -> np.ndarray:
    """Real field (2 pi)^{d/2} sum_j h_j e^{-i xi_j x_m} from Hermitian
    coefficients (see the module docstring for the normalization factor)."""
    from .lattice import _grid_arrays

    _, phase = _grid_arrays(grid)
    field = np.fft.fftn(phase * coefficients)
    return (2.0 * np.pi) ** (grid.d / 2.0) * np.real(field)


def sample_increment(spec: NoiseSpec, dt: float,
                     rng: Optional[np.random.Generator] = None,
                     seed: Optional[int] = None,
                     path_index: int = 0, step_index: int = 0) -> NoiseIncrement:
    """Draw one noise increment over a step of length dt.

    The spectral draws satisfy E h_j conj(h_j') = delta_jj' amplitude_j^2 dt
    and the synthesized field is real with covariance dt * Gamma discretized
    on the lattice.
    """
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if rng is None:
        if seed is None:
            raise DomainError("provide either rng or seed")
        rng = stream(seed, path_index, step_index)
    z = _hermitian_gaussians(spec.grid, rng)
    coeff = spec.amplitudes * np.sqrt(dt) * z
    field = synthesize(spec.grid, coeff)
    return NoiseIncrement(field=field, coefficients=coeff, dt=dt)


@dataclass(frozen=True)
class CovarianceReport:
    """Per-mode empirical/target variance ratios from repeated sampling."""

    max_rel_deviation: float
    band_half_width: float
    passed: bool
    n_samples: int
    n_modes_checked: int


def validate_covariance(spec: NoiseSpec, n_samples: int,
                        seed: int = 0, dt: float = 1.0,
                        confidence: float = 0.99) -> CovarianceReport:
    """Compare empirical per-mode variances against amplitude^2 dt.

    Each |h_j|^2 / (amplitude_j^2 dt) averages to 1 with variance 1/n (pair
    modes) or 2/n (self-conjugate modes); the pass band is the Gaussian
    approximation of the chi-square interval, Bonferroni-corrected over the
    checked modes.
    """
    if n_samples < 100:
        raise DomainError(f"need n_samples >= 100, got {n_samples}")
    from scipy.stats import norm

    grid = spec.grid
    amp2 = spec.amplitudes**2 * dt
    active = amp2 > 1e-10
    if not active.any():
        return CovarianceReport(0.0, 0.0, True, n_samples, 0)
    acc = np.zeros(grid.shape)
    for i in range(n_samples):
        inc = sample_increment(spec, dt, seed=seed, path_index=0, step_index=i)
        acc += np.abs(inc.coefficients) ** 2
    ratio = acc[active] / (n_samples * amp2[active])
    _, self_conj = _mirror_indices(grid)
    var_factor = np.where(self_conj[active], 2.0, 1.0)
    n_modes = int(active.sum())
    z_crit = float(norm.ppf(1.0 - (1.0 - confidence) / (2.0 * n_modes)))
    dev = np.abs(ratio - 1.0) / np.sqrt(var_factor / n_samples)
    max_dev = float((np.abs(ratio - 1.0)).max())
    band = z_crit * float(np.sqrt(var_factor.max() / n_samples))
    return CovarianceReport(
        max_rel_deviation=max_dev,
        band_half_width=band,
        passed=bool((dev <= z_crit).all()),
        n_samples=n_samples,
        n_modes_checked=n_modes,
    )
