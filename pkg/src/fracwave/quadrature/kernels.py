"""Time-integrated squared wave multipliers as stable radial kernels.

Every deterministic functional in this package integrates, against the
spectral measure, an expression of the form

    (1 + w^2)^alpha  *  K(a),      a = w^k,

where K collects the time integral of products of sin(. a)/a multipliers.
For constant-in-time Z those time integrals have closed forms; this module
evaluates them without cancellation and also exposes their decomposition

    K(a) = dc / a^2  +  sum_i  coef_i * trig_i(freq_i * a) / a^(p_i)

into a non-oscillatory part plus single-frequency oscillations, which the
radial integrator uses to evaluate truncation tails to high accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import DomainError


def sin_sq_time_integral(T: float, a):
    """int_0^T sin^2(s a) ds / a^2, series branch below |2 T a| = 0.5."""
    a = np.asarray(a, dtype=float)
    z = 2.0 * T * a
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 1.0)
    z2 = zs * zs
    series = (T**3 / 3.0) * (
        1.0 - z2 / 20.0 + z2 * z2 / 840.0 - z2**3 / 60480.0 + z2**4 / 6652800.0
    )
    safe = np.where(small, 1.0, a)
    closed = (T / 2.0 - np.sin(z) / (4.0 * safe)) / (safe * safe)
    return np.where(small, series, closed)


@dataclass(frozen=True)
class OscTerm:
    """coef * trig(freq * a) / a^apow with trig in {sin, cos}."""

    coef: float
    freq: float
    kind: str  # "sin" | "cos"
    apow: int


@dataclass(frozen=True)
class TimeKernel:
    """A kernel K(a) with its dc/oscillatory decomposition.

    The non-oscillatory component is dc_coef / a^dc_apow (dc_apow = 2 for
    every time-integrated wave kernel; 0 for the plain constant kernel).
    """

    dc_coef: float
    osc_terms: Tuple[OscTerm, ...]
    dc_apow: int = 2

    def evaluate(self, a):
        raise NotImplementedError

    def max_freq(self) -> float:
        freqs = [t.freq for t in self.osc_terms if t.coef != 0.0]
        return max(freqs) if freqs else 0.0


@dataclass(frozen=True)
class ConstantKernel(TimeKernel):
    """K(a) = 1; lets the radial engine integrate bare weighted profiles."""

    def evaluate(self, a):
        return np.ones_like(np.asarray(a, dtype=float))


def constant_kernel() -> ConstantKernel:
    return ConstantKernel(dc_coef=1.0, osc_terms=(), dc_apow=0)


@dataclass(frozen=True)
class FixedTimeKernel(TimeKernel):
    """sin^2(s a) / a^2 at a fixed time s."""

    s: float = 0.0

    def evaluate(self, a):
        a = np.asarray(a, dtype=float)
        phase = self.s * a
        small = np.abs(phase) < 1e-6
        safe = np.where(small, 1.0, a)
        exact = np.sin(phase) ** 2 / (safe * safe)
        series = self.s**2 * (1.0 - phase * phase / 3.0)
        return np.where(small, series, exact)


@dataclass(frozen=True)
class AccumulatedKernel(TimeKernel):
    """int_0^t sin^2(s a) ds / a^2 (the increasing-process kernel)."""

    t: float = 0.0

    def evaluate(self, a):
        return sin_sq_time_integral(self.t, a)


@dataclass(frozen=True)
class IncrementKernel(TimeKernel):
    """Exact second-moment kernel of the increment u(t2) - u(t1).

    int_0^t1 [sin((t2-s)a) - sin((t1-s)a)]^2 ds / a^2
      + int_t1^t2 sin^2((t2-s)a) ds / a^2
    = 4 sin^2((t2-t1)a/2) (t1/2 + cos(t2 a) sin(t1 a)/(2a)) / a^2
      + int_0^(t2-t1) sin^2(s a) ds / a^2.
    """

    t1: float = 0.0
    t2: float = 0.0

    def evaluate(self, a):
        a = np.asarray(a, dtype=float)
        t1, t2 = self.t1, self.t2
        lag = t2 - t1
        bracket = t1 / 2.0 + np.cos(t2 * a) * (t1 / 2.0) * np.sinc(t1 * a / np.pi)
        half_phase = 0.5 * lag * a
        small = np.abs(half_phase) < 1e-6
        safe = np.where(small, 1.0, a)
        osc = np.where(small, lag * lag, 4.0 * np.sin(half_phase) ** 2 / (safe * safe))
        return osc * bracket + sin_sq_time_integral(lag, a)


@dataclass(frozen=True)
class CrossKernel(TimeKernel):
    """int_0^t1 sin((t2-s)a) sin((t1-s)a) ds / a^2 (covariance of u(t1), u(t2)).

    Evaluated through the polarization identity against the increment and
    accumulated kernels, which keeps it stable for small a.
    """

    t1: float = 0.0
    t2: float = 0.0

    def evaluate(self, a):
        iso1 = sin_sq_time_integral(self.t1, a)
        iso2 = sin_sq_time_integral(self.t2, a)
        inc = increment_kernel(self.t1, self.t2).evaluate(a)
        return 0.5 * (iso1 + iso2 - inc)

    @staticmethod
    def build(t1: float, t2: float) -> "CrossKernel":
        if not 0.0 <= t1 <= t2:
            raise DomainError(f"need 0 <= t1 <= t2, got {t1}, {t2}")
        lag, total = t2 - t1, t2 + t1
        terms = [
            OscTerm(t1 / 2.0, lag, "cos", 2),
            OscTerm(-0.25, total, "sin", 3),
            OscTerm(0.25, lag, "sin", 3),
        ] if lag > 0 else [OscTerm(-0.25, 2.0 * t1, "sin", 3)]
        dc = 0.0 if lag > 0 else t1 / 2.0
        return CrossKernel(dc_coef=dc, osc_terms=tuple(t for t in terms if t.freq > 0),
                           t1=t1, t2=t2)


def fixed_time_kernel(s: float) -> FixedTimeKernel:
    if s < 0:
        raise DomainError(f"time must be >= 0, got {s}")
    terms = (OscTerm(-0.5, 2.0 * s, "cos", 2),) if s > 0 else ()
    return FixedTimeKernel(dc_coef=0.5 if s > 0 else 0.0, osc_terms=terms, s=s)


def accumulated_kernel(t: float) -> AccumulatedKernel:
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    terms = (OscTerm(-0.25, 2.0 * t, "sin", 3),) if t > 0 else ()
    return AccumulatedKernel(dc_coef=t / 2.0, osc_terms=terms, t=t)


def _increment_terms(t1: float, t2: float) -> Tuple[OscTerm, ...]:
    lag, total = t2 - t1, t2 + t1
    raw = [
        OscTerm(-t1, lag, "cos", 2),
        OscTerm(-0.5, lag, "sin", 3),
        OscTerm(0.5, total, "sin", 3),
        OscTerm(-0.25, 2.0 * t2, "sin", 3),
        OscTerm(-0.25, 2.0 * t1, "sin", 3),
    ]
    merged = {}
    for term in raw:
        if term.coef == 0.0 or term.freq == 0.0:
            continue
        key = (term.freq, term.kind, term.apow)
        merged[key] = merged.get(key, 0.0) + term.coef
    return tuple(
        OscTerm(c, f, kind, p) for (f, kind, p), c in sorted(merged.items()) if c != 0.0
    )


def increment_kernel(t1: float, t2: float) -> IncrementKernel:
    if not 0.0 <= t1 <= t2:
        raise DomainError(f"need 0 <= t1 <= t2, got {t1}, {t2}")
    if t2 == t1:
        return IncrementKernel(dc_coef=0.0, osc_terms=(), t1=t1, t2=t2)
    return IncrementKernel(
        dc_coef=(t1 + t2) / 2.0, osc_terms=_increment_terms(t1, t2), t1=t1, t2=t2
    )


def cross_kernel(t1: float, t2: float) -> CrossKernel:
    return CrossKernel.build(t1, t2)
