"""Time stepping of the mild fractional wave equation on the lattice.

The integrator is stochastic-trigonometric (exponential Euler): per Fourier
mode the homogeneous dynamics

    u_hat' = v_hat,   v_hat' = -|xi|^{2k} u_hat

are rotated exactly through (cos(dt w), sin(dt w)/w), and the forcing
sigma(u) dW + b(u) dt, evaluated at the left endpoint in physical space,
enters position through sin(dt w)/w and velocity through cos(dt w).  The
rotation group property then telescopes the whole path into a left-endpoint
Riemann sum of the continuum convolution, so linear problems are integrated
with zero time-discretization error for any dt.

Paths own their state; batches of paths step together as stacked arrays
with one noise stream per (path, step).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BlowUpError, DomainError
from .lattice import GridSpec, SpectralField, StateVector, sobolev_norm
from .model import ModelParams, SpectralMeasure
from .noise import NoiseIncrement, NoiseSpec, _hermitian_gaussians, stream, synthesize

# ---------------------------------------------------------------------------
# Coefficient functions
# ---------------------------------------------------------------------------

_REGISTRY: Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], float]] = {}


def register_coefficient(name: str, fn: Callable[[np.ndarray], np.ndarray],
                         growth_constant: float) -> None:
    """Register a named coefficient; |fn(z)| <= growth_constant |z| is
    verified on a sample grid at registration time."""
    z = np.linspace(-50.0, 50.0, 2001)
    vals = np.abs(np.asarray(fn(z), dtype=float))
    if np.any(vals > growth_constant * np.abs(z) + 1e-12):
        raise DomainError(
            f"coefficient {name!r} violates |f(z)| <= {growth_constant}|z|"
        )
    _REGISTRY[name] = (fn, growth_constant)


@dataclass(frozen=True)
class CoefficientFn:
    """sigma/b coefficient: zero, linear z -> lam z, sine z -> lam sin z,
    a registry entry, or the affine extension lam z + offset (outside the
    linear-growth hypotheses; excluded from acceptance runs)."""

    kind: str
    lam: float = 0.0
    offset: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "sine", "affine", "named"):
            raise DomainError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "named" and self.name not in _REGISTRY:
            raise DomainError(f"coefficient {self.name!r} is not registered")

    @property
    def growth_constant(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind in ("linear", "sine"):
            return abs(self.lam)
        if self.kind == "named":
            return _REGISTRY[self.name][1]
        raise DomainError("affine coefficients have no linear growth bound")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind in ("linear", "sine") and self.lam == 0.0)

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "linear":
            return self.lam * u
        if self.kind == "sine":
            return self.lam * np.sin(u)
        if self.kind == "affine":
            return self.lam * u + self.offset
        return _REGISTRY[self.name][0](u)


ZERO = CoefficientFn("zero")


def linear_fn(lam: float) -> CoefficientFn:
    return CoefficientFn("linear", lam=lam)


def sine_fn(lam: float) -> CoefficientFn:
    return CoefficientFn("sine", lam=lam)


# ---------------------------------------------------------------------------
# Configuration and trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Complete problem instance for path simulation."""

    params: ModelParams
    measure: SpectralMeasure
    grid: GridSpec
    dt: float
    sigma: CoefficientFn
    b: CoefficientFn
    v0: np.ndarray
    v0_tilde: np.ndarray
    alpha: float
    seed: int
    forced_z: Optional[np.ndarray] = None
    dealias: bool = False
    blowup_threshold: float = 1e12

    def __post_init__(self):
        if not 0.0 < self.dt <= self.params.T:
            raise DomainError(f"need 0 < dt <= T, got dt={self.dt}, T={self.params.T}")
        for name, arr in (("v0", self.v0), ("v0_tilde", self.v0_tilde)):
            a = np.asarray(arr)
            if a.shape != self.grid.shape:
                raise DomainError(f"{name} shape {a.shape} does not match grid {self.grid.shape}")
            if not np.all(np.isfinite(a)):
                raise DomainError(f"{name} contains non-finite values")
        if self.forced_z is not None and np.asarray(self.forced_z).shape != self.grid.shape:
            raise DomainError("forced_z shape does not match grid")
        if self.params.d != self.grid.d or self.measure.d != self.grid.d:
            raise DomainError("params, measure and grid dimensions must agree")

    def digest(self) -> str:
        payload = {
            "k": self.params.k, "d": self.params.d, "T": self.params.T,
            "measure": repr(self.measure), "grid": (self.grid.d, self.grid.L, self.grid.N),
            "dt": self.dt, "sigma": repr(self.sigma), "b": repr(self.b),
            "alpha": self.alpha, "seed": self.seed,
            "forced": self.forced_z is not None,
            "v0": hashlib.sha256(np.ascontiguousarray(self.v0).tobytes()).hexdigest(),
            "v0_tilde": hashlib.sha256(np.ascontiguousarray(self.v0_tilde).tobytes()).hexdigest(),
            "dealias": self.dealias,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def zero_field(grid: GridSpec) -> np.ndarray:
    return np.zeros(grid.shape)


@dataclass
class Trajectory:
    """Simulated path: snapshots plus per-step norm summaries."""

    times: np.ndarray
    states: Optional[List[StateVector]]
    norm_times: np.ndarray
    sobolev_sq: np.ndarray
    l2_sq: np.ndarray
    alpha: float
    seed: int
    config_digest: str

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,sobolev_norm_sq_alpha,l2_norm_sq\n")
            for t, s, l2 in zip(self.norm_times, self.sobolev_sq, self.l2_sq):
                fh.write(f"{t:.17g},{s:.17g},{l2:.17g}\n")


# ---------------------------------------------------------------------------
# Half-spectrum machinery (internal fast path)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _half_ops(grid: GridSpec, k: float):
    n = grid.N
    full = grid.axis_frequencies()
    half = grid.dxi * np.arange(n // 2 + 1)
    axes = [full] * (grid.d - 1) + [half]
    mesh = np.meshgrid(*axes, indexing="ij")
    radius = np.sqrt(sum(m * m for m in mesh))
    omega2k = radius ** (2.0 * k)
    pair = np.full(radius.shape, 2.0)
    pair[..., 0] = 1.0
    pair[..., -1] = 1.0
    norm_factor = (2.0 * grid.L) ** grid.d / float(n) ** (2 * grid.d)
    # 2/3-rule dealias mask over all axes
    keep = np.ones(radius.shape, dtype=bool)
    limit = (2.0 / 3.0) * (n // 2)
    ints_axes = [np.abs(grid.axis_modes())] * (grid.d - 1) + [np.arange(n // 2 + 1)]
    ints = np.meshgrid(*ints_axes, indexing="ij")
    for m in ints:
        keep &= m <= limit
    return radius, omega2k, pair, norm_factor, keep


def _half_sobolev_sq(grid: GridSpec, alpha: float, radius, pair, norm_factor, spectra):
    weight = pair * (1.0 + radius * radius) ** alpha
    mags = np.abs(spectra) ** 2
    return norm_factor * np.tensordot(mags, weight, axes=(tuple(range(1, mags.ndim)),
                                                          tuple(range(weight.ndim))))


def _spatial_axes(d: int):
    return tuple(range(1, d + 1))


class _BatchState:
    """Stacked (B, modes) half-spectrum state for a batch of paths."""

    def __init__(self, config: SolverConfig, path_indices: Sequence[int]):
        grid = config.grid
        self.config = config
        self.grid = grid
        self.paths = list(path_indices)
        b = len(self.paths)
        axes = _spatial_axes(grid.d)
        u0 = np.fft.rfftn(np.asarray(config.v0, dtype=float), axes=tuple(a - 1 for a in axes))
        w0 = np.fft.rfftn(np.asarray(config.v0_tilde, dtype=float), axes=tuple(a - 1 for a in axes))
        self.u = np.broadcast_to(u0, (b,) + u0.shape).copy()
        self.v = np.broadcast_to(w0, (b,) + w0.shape).copy()
        self.noise = NoiseSpec.build(config.measure, grid)
        self.radius, self.omega2k, self.pair, self.norm_factor, self.keep = _half_ops(
            grid, config.params.k)
        from .propagator import Propagator, fourier_G
        prop = Propagator(k=config.params.k, T=config.params.T)
        self._prop = prop
        self._fourier_G = fourier_G
        self.step_index = 0

    def multipliers(self, dt: float):
        g = self._fourier_G(self._prop, dt, self.radius)
        c = np.cos(dt * self.radius ** self.config.params.k)
        return c, g, -self.omega2k * g

    def physical_u(self) -> np.ndarray:
        return np.fft.irfftn(self.u, s=self.grid.shape, axes=_spatial_axes(self.grid.d))

    def sobolev_sq(self, alpha: float, which: str = "u") -> np.ndarray:
        spectra = self.u if which == "u" else self.v
        return _half_sobolev_sq(self.grid, alpha, self.radius, self.pair,
                                self.norm_factor, spectra)

    def draw_increments(self, dt: float) -> np.ndarray:
        """Physical noise increments for the whole batch at the current step."""
        grid = self.grid
        coeffs = np.empty((len(self.paths),) + grid.shape, dtype=complex)
        amp = self.noise.amplitudes * math.sqrt(dt)
        for i, path in enumerate(self.paths):
            rng = stream(self.config.seed, path, self.step_index)
            coeffs[i] = amp * _hermitian_gaussians(grid, rng)
        from .lattice import _grid_arrays

        _, phase = _grid_arrays(grid)
        fields = np.fft.fftn(phase * coeffs, axes=_spatial_axes(grid.d))
        return (2.0 * math.pi) ** (grid.d / 2.0) * np.real(fields)

    def step(self, dt: float) -> None:
        config = self.config
        cos_dt, g_dt, vg = self.multipliers(dt)
        needs_phys = (config.forced_z is None and not config.sigma.is_zero) or not config.b.is_zero
        u_phys = self.physical_u() if needs_phys else None
        if config.forced_z is not None:
            amplitude = np.broadcast_to(config.forced_z, (len(self.paths),) + self.grid.shape)
        elif config.sigma.is_zero:
            amplitude = None
        else:
            amplitude = config.sigma.apply(u_phys)
        forcing = None
        if amplitude is not None:
            forcing = amplitude * self.draw_increments(dt)
        if not config.b.is_zero:
            drift = config.b.apply(u_phys) * dt
            forcing = drift if forcing is None else forcing + drift
        if forcing is not None:
            f_hat = np.fft.rfftn(forcing, axes=_spatial_axes(self.grid.d))
            if config.dealias:
                f_hat = np.where(self.keep, f_hat, 0.0)
        else:
            f_hat = None
        u_new = cos_dt * self.u + g_dt * self.v
        v_new = vg * self.u + cos_dt * self.v
        if f_hat is not None:
            u_new += g_dt * f_hat
            v_new += cos_dt * f_hat
        self.u, self.v = u_new, v_new
        self.step_index += 1
        if needs_phys and u_phys is not None:
            worst = float(np.max(np.abs(u_phys)))
            if not np.isfinite(worst) or worst > config.blowup_threshold:
                raise BlowUpError(
                    f"path blow-up: |u| reached {worst:.3e} at step {self.step_index}",
                    path_index=self.paths[int(np.argmax(np.max(np.abs(u_phys), axis=tuple(range(1, u_phys.ndim)))))],
                    step_index=self.step_index,
                )
        elif self.step_index % 64 == 0:
            if not np.all(np.isfinite(self.u)):
                raise BlowUpError("path blow-up: non-finite spectrum",
                                  step_index=self.step_index)


def _snapshot_steps(t_final: float, n_steps: int, snapshot_times: Sequence[float]) -> Dict[int, float]:
    dt_eff = t_final / n_steps
    out: Dict[int, float] = {}
    for t in snapshot_times:
        if not 0.0 <= t <= t_final + 1e-12:
            raise DomainError(f"snapshot time {t} outside [0, {t_final}]")
        idx = int(round(t / dt_eff))
        if abs(idx * dt_eff - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(
                f"snapshot time {t} does not align with the step grid (dt={dt_eff})"
            )
        out[idx] = idx * dt_eff
    return out


def run_batch(config: SolverConfig, path_indices: Sequence[int],
              snapshot_times: Sequence[float], t_final: Optional[float] = None,
              record_norms: bool = False,
              statistic: Optional[Callable[[np.ndarray, "_BatchState"], np.ndarray]] = None,
              ) -> dict:
    """Step a batch of paths, returning half-spectrum snapshots.

    Snapshots are either raw stacked spectra or, when statistic is given,
    its per-path reduction (saves memory for large batches).
    """
    t_final = config.params.T if t_final is None else float(t_final)
    if t_final <= 0:
        raise DomainError("final time must be positive")
    n_steps = max(1, int(math.ceil(t_final / config.dt - 1e-12)))
    dt_eff = t_final / n_steps
    marks = _snapshot_steps(t_final, n_steps, snapshot_times)
    state = _BatchState(config, path_indices)
    reduce = statistic if statistic is not None else (
        lambda sp, st: (sp.copy(), st.v.copy()))
    snapshots: Dict[float, np.ndarray] = {}
    norms = [] if record_norms else None
    if 0 in marks:
        snapshots[marks[0]] = reduce(state.u, state)
    if record_norms:
        norms.append((0.0, state.sobolev_sq(config.alpha), state.sobolev_sq(0.0)))
    for i in range(1, n_steps + 1):
        state.step(dt_eff)
        if i in marks:
            snapshots[marks[i]] = reduce(state.u, state)
        if record_norms:
            norms.append((i * dt_eff, state.sobolev_sq(config.alpha), state.sobolev_sq(0.0)))
    out = {"snapshots": snapshots, "dt": dt_eff, "n_steps": n_steps, "state": state}
    if record_norms:
        out["norm_times"] = np.array([n[0] for n in norms])
        out["sobolev_sq"] = np.vstack([n[1] for n in norms]).T
        out["l2_sq"] = np.vstack([n[2] for n in norms]).T
    return out


def _half_to_state(grid: GridSpec, u_half: np.ndarray, v_half: np.ndarray) -> StateVector:
    axes = tuple(range(grid.d))
    u_phys = np.fft.irfftn(u_half, s=grid.shape, axes=axes)
    v_phys = np.fft.irfftn(v_half, s=grid.shape, axes=axes)
    return StateVector(
        position=SpectralField.from_values(grid, u_phys),
        velocity=SpectralField.from_values(grid, v_phys),
    )


# ---------------------------------------------------------------------------
# Public single-state operations
# ---------------------------------------------------------------------------

def linear_propagate(state: StateVector, dt: float, k: float) -> StateVector:
    """Exact homogeneous rotation of (u, du/dt) through time dt."""
    if dt < 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    from .lattice import mode_radii
    from .propagator import Propagator, fourier_G

    grid = state.grid
    r = mode_radii(grid)
    prop = Propagator(k=k, T=max(dt, 1e-300))
    g = fourier_G(prop, dt, r)
    c = np.cos(dt * r**k)
    u, v = state.position.coefficients, state.velocity.coefficients
    u_new = c * u + g * v
    v_new = -(r ** (2.0 * k)) * g * u + c * v
    return StateVector(
        position=SpectralField(grid, u_new),
        velocity=SpectralField(grid, v_new),
    )


def step(state: StateVector, increment: NoiseIncrement, sigma: CoefficientFn,
         b: CoefficientFn, dt: float, k: float,
         forced_z: Optional[np.ndarray] = None,
         blowup_threshold: float = 1e12) -> StateVector:
    """One stochastic-trigonometric step with left-endpoint forcing."""
    if increment.dt != dt:
        raise DomainError(f"increment dt {increment.dt} does not match step dt {dt}")
    from .lattice import inverse_transform, mode_radii, transform
    from .propagator import Propagator, fourier_G

    grid = state.grid
    u_phys = inverse_transform(grid, state.position.coefficients)
    worst = float(np.max(np.abs(u_phys)))
    if not np.isfinite(worst) or worst > blowup_threshold:
        raise BlowUpError(f"path blow-up: |u| reached {worst:.3e}")
    amplitude = forced_z if forced_z is not None else sigma.apply(u_phys)
    forcing = amplitude * increment.field + b.apply(u_phys) * dt
    f_hat = transform(grid, forcing)
    r = mode_radii(grid)
    prop = Propagator(k=k, T=max(dt, 1e-300))
    g = fourier_G(prop, dt, r)
    c = np.cos(dt * r**k)
    u, v = state.position.coefficients, state.velocity.coefficients
    u_new = c * u + g * v + g * f_hat
    v_new = -(r ** (2.0 * k)) * g * u + c * v + c * f_hat
    return StateVector(
        position=SpectralField(grid, u_new),
        velocity=SpectralField(grid, v_new),
    )


def solve_path(config: SolverConfig, snapshot_times: Optional[Sequence[float]] = None,
               path_index: int = 0, store_states: bool = True,
               record_norms: bool = True) -> Trajectory:
    """Simulate one path to T with n = ceil(T/dt) uniform steps.

    Deterministic given (seed, path_index); snapshots default to {0, T}.
    """
    if snapshot_times is None:
        snapshot_times = [0.0, config.params.T]
    snapshot_times = sorted(set(float(t) for t in snapshot_times) | {0.0})
    result = run_batch(config, [path_index], snapshot_times,
                       record_norms=record_norms)
    times = np.array(sorted(result["snapshots"].keys()))
    states = None
    if store_states:
        states = []
        for t in times:
            u_half, v_half = result["snapshots"][t]
            states.append(_half_to_state(config.grid, u_half[0], v_half[0]))
    return Trajectory(
        times=times,
        states=states,
        norm_times=result.get("norm_times", np.array([]))
        if record_norms else np.array([]),
        sobolev_sq=result.get("sobolev_sq", np.zeros((1, 0)))[0] if record_norms else np.array([]),
        l2_sq=result.get("l2_sq", np.zeros((1, 0)))[0] if record_norms else np.array([]),
        alpha=config.alpha,
        seed=config.seed,
        config_digest=config.digest(),
    )


# ---------------------------------------------------------------------------
# Picard iteration with frozen noise
# ---------------------------------------------------------------------------

@dataclass
class PicardResult:
    distances: List[float]
    iterates_final: List[np.ndarray]
    fixed_point: np.ndarray
    times: np.ndarray


def picard_iterate(config: SolverConfig, n_iters: int, path_index: int = 0) -> PicardResult:
    """Fixed-point iteration of the discrete mild equation with frozen noise.

    Iterate m+1 propagates the initial data and injects forcing evaluated
    along iterate m; distances are max-over-time lattice L2 gaps between
    successive iterates.  The discrete fixed point coincides with
    solve_path on the same seed and path index.
    """
    if n_iters < 2:
        raise DomainError(f"need n_iters >= 2, got {n_iters}")
    grid = config.grid
    t_final = config.params.T
    n_steps = max(1, int(math.ceil(t_final / config.dt - 1e-12)))
    dt = t_final / n_steps
    axes = tuple(range(grid.d))

    base = _BatchState(config, [path_index])
    cos_dt, g_dt, vg = base.multipliers(dt)
    radius, _, pair, norm_factor, _ = _half_ops(grid, config.params.k)

    increments = np.empty((n_steps,) + grid.shape)
    amp = base.noise.amplitudes
    from .lattice import _grid_arrays

    _, phase = _grid_arrays(grid)
    scale = (2.0 * math.pi) ** (grid.d / 2.0)
    for i in range(n_steps):
        rng = stream(config.seed, path_index, i)
        coeff = amp * math.sqrt(dt) * _hermitian_gaussians(grid, rng)
        increments[i] = scale * np.real(np.fft.fftn(phase * coeff, axes=axes))

    u0 = np.fft.rfftn(np.asarray(config.v0, dtype=float), axes=axes)
    w0 = np.fft.rfftn(np.asarray(config.v0_tilde, dtype=float), axes=axes)

    def sweep(prev_u_phys: Optional[np.ndarray]) -> np.ndarray:
        """One pass of the discrete mild map; returns u at every step."""
        u, v = u0.copy(), w0.copy()
        out = np.empty((n_steps + 1,) + u0.shape, dtype=complex)
        out[0] = u
        for i in range(n_steps):
            if prev_u_phys is None:
                f_hat = None
            else:
                u_prev = prev_u_phys[i]
                amplitude = (config.forced_z if config.forced_z is not None
                             else config.sigma.apply(u_prev))
                forcing = amplitude * increments[i] + config.b.apply(u_prev) * dt
                f_hat = np.fft.rfftn(forcing, axes=axes)
            u, v = (cos_dt * u + g_dt * v + (g_dt * f_hat if f_hat is not None else 0.0),
                    vg * u + cos_dt * v + (cos_dt * f_hat if f_hat is not None else 0.0))
            out[i + 1] = u
        return out

    def to_phys(spectra: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(spectra, s=grid.shape, axes=tuple(a + 1 for a in axes))

    def l2_gap(a: np.ndarray, b: np.ndarray) -> float:
        diff = np.abs(a - b) ** 2
        weight = pair
        sums = np.tensordot(diff, weight, axes=(tuple(range(1, diff.ndim)),
                                                tuple(range(weight.ndim))))
        return float(np.sqrt(norm_factor * sums.max()))

    from .errors import ConvergenceError

    previous = sweep(None)
    distances: List[float] = []
    finals = [np.real(np.fft.irfftn(previous[-1], s=grid.shape, axes=axes))]
    grow = 0
    for _ in range(n_iters):
        nxt = sweep(to_phys(previous[:-1]))
        distances.append(l2_gap(nxt, previous))
        finals.append(np.real(np.fft.irfftn(nxt[-1], s=grid.shape, axes=axes)))
        if len(distances) >= 2 and distances[-1] > distances[-2]:
            grow += 1
            if grow >= 3:
                raise ConvergenceError(
                    f"Picard iteration diverging: successive distances {distances}")
        else:
            grow = 0
        previous = nxt
    return PicardResult(distances=distances, iterates_final=finals,
                        fixed_point=finals[-1], times=np.arange(n_steps + 1) * dt)
