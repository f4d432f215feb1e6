"""Fourier multipliers of the fundamental solution of u_tt + (-Laplace)^k u = 0.

All multipliers are radial functions of r = |xi|.  The wave multiplier
sin(t r^k)/r^k has a removable singularity at r = 0 which is evaluated
through a short sinc series once the phase t*r^k drops below a threshold,
and the two-time difference is computed in product form so that nearby
times do not cancel catastrophically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Phase below which the sinc series replaces the closed form.
_SERIES_THRESHOLD = 1e-4


@dataclass(frozen=True)
class Propagator:
    """Multiplier family for a fixed fractional order k on horizon [0, T]."""

    k: float
    T: float

    def __post_init__(self):
        if not self.k > 0:
            raise DomainError(f"k must be positive, got {self.k}")
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T}")


def _sinc_series(x):
    # sin(x)/x = 1 - x^2/6 + x^4/120, relative error < 1e-16 for |x| <= 1e-4
    x2 = x * x
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0


def fourier_G(p: Propagator, t, r):
    """sin(t r^k)/r^k, the position-response multiplier at lag t.

    Vectorized in both t and r (broadcasting).  At t*r^k -> 0 the limit t
    is produced by the series branch.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    a = r**p.k
    phase = t * a
    small = np.abs(phase) < _SERIES_THRESHOLD
    safe_a = np.where(a == 0.0, 1.0, a)
    exact = np.sin(phase) / safe_a
    series = t * _sinc_series(phase)
    out = np.where(small, series, exact)
    if out.ndim == 0:
        return float(out)
    return out


def fourier_dG(p: Propagator, t, r):
    """cos(t r^k), the multiplier of the time derivative of the response."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.cos(t * r**p.k)
    if out.ndim == 0:
        return float(out)
    return out


def fourier_G_diff(p: Propagator, t1, t2, r):
    """fourier_G(t2, r) - fourier_G(t1, r) in cancellation-safe product form.

    Uses sin x - sin y = 2 cos((x+y)/2) sin((x-y)/2), so the result keeps
    full relative accuracy even when t2 - t1 is many orders of magnitude
    smaller than t1.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 > t2):
        raise DomainError("fourier_G_diff requires t1 <= t2")
    r = np.asarray(r, dtype=float)
    a = r**p.k
    half_diff = 0.5 * (t2 - t1) * a
    mid = 0.5 * (t1 + t2) * a
    small = np.abs(half_diff) < _SERIES_THRESHOLD
    safe_a = np.where(a == 0.0, 1.0, a)
    exact = 2.0 * np.cos(mid) * np.sin(half_diff) / safe_a
    series = (t2 - t1) * np.cos(mid) * _sinc_series(half_diff)
    out = np.where(small, series, exact)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_bound(p: Propagator, r):
    """Uniform-in-time envelope 2^k (1 + T^2) / (1 + r^2)^k of fourier_G^2."""
    r = np.asarray(r, dtype=float)
    out = 2.0**p.k * (1.0 + p.T**2) / (1.0 + r * r) ** p.k
    if out.ndim == 0:
        return float(out)
    return out
