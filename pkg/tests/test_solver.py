import math

import numpy as np
import pytest

from fracwave import lattice, model, noise, solver
from fracwave.errors import BlowUpError, DomainError
from fracwave.propagator import Propagator, fourier_G

GRID = lattice.make_grid(1, 8.0, 64)
PARAMS = model.ModelParams(k=1.0, d=1, T=1.0)
RIESZ = model.riesz_measure(0.5, 1)


def _config(**kw):
    base = dict(params=PARAMS, measure=RIESZ, grid=GRID, dt=2.0**-6,
                sigma=solver.ZERO, b=solver.ZERO,
                v0=solver.zero_field(GRID), v0_tilde=solver.zero_field(GRID),
                alpha=0.25, seed=101)
    base.update(kw)
    return solver.SolverConfig(**base)


def _single_mode_state(grid, j, amp=1.0):
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[j] = amp
    coeffs[-j] = amp
    u = lattice.SpectralField(grid, coeffs)
    v = lattice.SpectralField(grid, np.zeros(grid.shape, dtype=complex))
    return lattice.StateVector(position=u, velocity=v)


# ---------------------------------------------------------------------------
# Coefficient functions
# ---------------------------------------------------------------------------

def test_coefficient_growth_constants():
    assert solver.ZERO.growth_constant == 0.0
    assert solver.linear_fn(-2.0).growth_constant == 2.0
    assert solver.sine_fn(1.5).growth_constant == 1.5


def test_coefficient_growth_bound_holds_on_samples():
    z = np.linspace(-30, 30, 1001)
    for fn in (solver.linear_fn(0.7), solver.sine_fn(2.0)):
        assert np.all(np.abs(fn.apply(z)) <= fn.growth_constant * np.abs(z) + 1e-12)


def test_registry_rejects_unbounded_coefficient():
    with pytest.raises(DomainError):
        solver.register_coefficient("bad", lambda z: z + 1.0, 1.0)


def test_registry_roundtrip():
    solver.register_coefficient("half_tanh", lambda z: 0.5 * np.tanh(z), 0.5)
    fn = solver.CoefficientFn("named", name="half_tanh")
    assert fn.growth_constant == 0.5
    assert fn.apply(np.array([0.3]))[0] == pytest.approx(0.5 * np.tanh(0.3))


# ---------------------------------------------------------------------------
# Linear propagation
# ---------------------------------------------------------------------------

def test_linear_propagate_zero_dt_is_identity():
    state = _single_mode_state(GRID, 3, 1.3)
    out = solver.linear_propagate(state, 0.0, 1.0)
    np.testing.assert_array_equal(out.position.coefficients,
                                  state.position.coefficients)


def test_linear_propagate_rotation_formula():
    j, k = 5, 1.0
    state = _single_mode_state(GRID, j, 2.0)
    t = 0.37
    out = solver.linear_propagate(state, t, k)
    omega = (GRID.dxi * j) ** k
    assert out.position.coefficients[j] == pytest.approx(
        2.0 * math.cos(t * omega), rel=1e-14)


def test_linear_group_property():
    rng = np.random.default_rng(0)
    k = 1.7
    state = lattice.StateVector(
        position=lattice.SpectralField.from_values(GRID, rng.standard_normal(GRID.shape)),
        velocity=lattice.SpectralField.from_values(GRID, rng.standard_normal(GRID.shape)))
    one = solver.linear_propagate(solver.linear_propagate(state, 0.21, k), 0.34, k)
    two = solver.linear_propagate(state, 0.55, k)
    scale = np.abs(two.position.coefficients).max()
    assert np.max(np.abs(one.position.coefficients - two.position.coefficients)) < 1e-13 * scale
    assert np.max(np.abs(one.velocity.coefficients - two.velocity.coefficients)) < 1e-13 * np.abs(two.velocity.coefficients).max()


def test_energy_conservation_per_mode():
    rng = np.random.default_rng(1)
    k = 2.0
    state = lattice.StateVector(
        position=lattice.SpectralField.from_values(GRID, rng.standard_normal(GRID.shape)),
        velocity=lattice.SpectralField.from_values(GRID, rng.standard_normal(GRID.shape)))
    r = lattice.mode_radii(GRID)
    out = solver.linear_propagate(state, 0.83, k)

    def energy(st):
        return (np.abs(st.velocity.coefficients) ** 2
                + r ** (2 * k) * np.abs(st.position.coefficients) ** 2)

    e0, e1 = energy(state), energy(out)
    mask = e0 > 1e-10 * e0.max()
    assert np.max(np.abs(e1[mask] - e0[mask]) / e0[mask]) < 1e-12


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def test_step_zero_coefficients_equals_linear():
    spec = noise.NoiseSpec.build(RIESZ, GRID)
    inc = noise.sample_increment(spec, 0.1, seed=5)
    state = _single_mode_state(GRID, 4, 1.0)
    stepped = solver.step(state, inc, solver.ZERO, solver.ZERO, 0.1, 1.0)
    linear = solver.linear_propagate(state, 0.1, 1.0)
    np.testing.assert_allclose(stepped.position.coefficients,
                               linear.position.coefficients, atol=1e-13)
    np.testing.assert_allclose(stepped.velocity.coefficients,
                               linear.velocity.coefficients, atol=1e-13)


def test_step_linear_drift_single_mode():
    """b = Linear(lam): one step adds fourier_G(dt)*lam*u_j*dt on top of the
    rotation."""
    spec = noise.NoiseSpec.build(model.FlatDensity(level=0.0, d=1), GRID)
    dt, lam, j = 0.2, 0.7, 6
    inc = noise.sample_increment(spec, dt, seed=1)  # identically zero field
    state = _single_mode_state(GRID, j, 1.0)
    out = solver.step(state, inc, solver.ZERO, solver.linear_fn(lam), dt, 1.0)
    r = GRID.dxi * j
    prop = Propagator(k=1.0, T=1.0)
    g = fourier_G(prop, dt, r)
    expected = math.cos(dt * r) * 1.0 + g * lam * 1.0 * dt
    assert out.position.coefficients[j] == pytest.approx(expected, rel=1e-12)


def test_step_dt_mismatch_rejected():
    spec = noise.NoiseSpec.build(RIESZ, GRID)
    inc = noise.sample_increment(spec, 0.1, seed=5)
    state = _single_mode_state(GRID, 4)
    with pytest.raises(DomainError):
        solver.step(state, inc, solver.ZERO, solver.ZERO, 0.2, 1.0)


def test_solve_path_linear_position_data_exact_any_dt():
    j, amp = 3, 1.4
    x = GRID.axis_coordinates()
    v0 = amp * np.cos(GRID.dxi * j * x)
    for dt in (0.3, 2.0**-4, 0.11):  # including dt that does not divide T
        cfg = _config(dt=dt, v0=v0)
        traj = solver.solve_path(cfg, snapshot_times=[0.0, 1.0], record_norms=False)
        omega = GRID.dxi * j
        expected = amp * math.cos(1.0 * omega) * np.cos(GRID.dxi * j * x)
        got = traj.states[-1].position.values()
        assert np.max(np.abs(got - expected)) < 1e-12 * amp


def test_solve_path_linear_velocity_data_exact():
    j, amp = 5, 0.9
    x = GRID.axis_coordinates()
    vt0 = amp * np.cos(GRID.dxi * j * x)
    cfg = _config(dt=2.0**-5, v0_tilde=vt0)
    traj = solver.solve_path(cfg, snapshot_times=[0.0, 1.0], record_norms=False)
    omega = GRID.dxi * j
    expected = amp * math.sin(omega) / omega * np.cos(GRID.dxi * j * x)
    got = traj.states[-1].position.values()
    assert np.max(np.abs(got - expected)) < 1e-12 * amp


def test_solve_path_trajectory_contract():
    cfg = _config(v0=lattice.gaussian_bump(GRID))
    traj = solver.solve_path(cfg, snapshot_times=[0.0, 0.5, 1.0])
    assert traj.times[0] == 0.0
    assert np.all(np.diff(traj.times) > 0)
    np.testing.assert_allclose(traj.states[0].position.values(),
                               cfg.v0, atol=1e-12)
    assert len(traj.norm_times) == int(round(1.0 / cfg.dt)) + 1
    assert traj.config_digest == cfg.digest()


def test_solve_path_deterministic_given_seed():
    cfg = _config(forced_z=lattice.gaussian_bump(GRID), seed=77)
    a = solver.solve_path(cfg, snapshot_times=[0.0, 1.0], record_norms=False)
    b = solver.solve_path(cfg, snapshot_times=[0.0, 1.0], record_norms=False)
    np.testing.assert_array_equal(a.states[-1].position.coefficients,
                                  b.states[-1].position.coefficients)


def test_misaligned_snapshot_time_rejected():
    cfg = _config(dt=2.0**-4)
    with pytest.raises(DomainError):
        solver.solve_path(cfg, snapshot_times=[0.3])


def test_blowup_guard_triggers():
    cfg = _config(sigma=solver.ZERO,
                  b=solver.CoefficientFn("affine", lam=2000.0, offset=0.0),
                  v0=lattice.gaussian_bump(GRID), dt=2.0**-6,
                  blowup_threshold=1e6)
    with pytest.raises(BlowUpError):
        solver.solve_path(cfg, snapshot_times=[0.0, 1.0], record_norms=False)


# ---------------------------------------------------------------------------
# Forced runs against the exact lattice second moment
# ---------------------------------------------------------------------------

def lattice_exact_forced_moment(cfg, t):
    """Closed-form E||u(t)||^2_{H^alpha} for forced runs on the lattice.

    u_hat(t) = sum_n G(t - t_n) F_hat_n with independent forcing spectra,
    E|F_hat_j|^2 = (2L)^(-2d) sum_l |Z_hat_(j-l)|^2 (2 pi)^d (2L)^(2d)
                   amplitude_l^2 dt.
    """
    grid = cfg.grid
    n_steps = int(round(t / cfg.dt))
    spec = noise.NoiseSpec.build(cfg.measure, grid)
    z_hat = lattice.transform(grid, cfg.forced_z)
    r = lattice.mode_radii(grid)
    prop = Propagator(k=cfg.params.k, T=cfg.params.T)
    amp2 = spec.amplitudes**2
    n = grid.N
    # circular convolution of |Z|^2 with the mode masses
    conv = np.real(np.fft.ifft(np.fft.fft(np.abs(z_hat) ** 2) * np.fft.fft(amp2)))
    e_f = (2 * np.pi) ** grid.d * conv * cfg.dt
    total = np.zeros(grid.shape)
    for i in range(n_steps):
        g = fourier_G(prop, t - i * cfg.dt, r)
        total += g * g * e_f
    weight = (1 + r**2) ** cfg.alpha / (2 * grid.L) ** grid.d
    return float((weight * total).sum())


def test_forced_run_matches_lattice_closed_form():
    """MC second moment vs the exact per-mode lattice formula: validates the
    noise normalization, the stepping and the norm convention together."""
    grid = lattice.make_grid(1, 8.0, 64)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ, grid=grid,
        dt=2.0**-5, sigma=solver.ZERO, b=solver.ZERO,
        v0=solver.zero_field(grid), v0_tilde=solver.zero_field(grid),
        alpha=0.25, seed=4242, forced_z=lattice.gaussian_bump(grid))
    exact = lattice_exact_forced_moment(cfg, 0.5)
    n_paths = 600
    result = solver.run_batch(cfg, list(range(n_paths)), [0.5], t_final=0.5)
    state = result["state"]
    u_half, _ = result["snapshots"][0.5]
    norms = solver._half_sobolev_sq(grid, cfg.alpha, state.radius, state.pair,
                                    state.norm_factor, u_half)
    mean = float(norms.mean())
    se = float(norms.std(ddof=1) / math.sqrt(n_paths))
    assert abs(mean - exact) < 4 * se
    assert abs(mean - exact) / exact < 0.15


def test_forced_run_matches_quadrature_isometry():
    """Small-scale version of the isometry acceptance criterion."""
    from fracwave.quadrature import GaussianBump, isometry_functional

    grid = lattice.make_grid(1, 8.0, 256)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ, grid=grid,
        dt=2.0**-8, sigma=solver.ZERO, b=solver.ZERO,
        v0=solver.zero_field(grid), v0_tilde=solver.zero_field(grid),
        alpha=0.25, seed=31, forced_z=lattice.gaussian_bump(grid))
    n_paths = 400
    result = solver.run_batch(cfg, list(range(n_paths)), [0.5], t_final=0.5)
    state = result["state"]
    u_half, _ = result["snapshots"][0.5]
    norms = solver._half_sobolev_sq(grid, cfg.alpha, state.radius, state.pair,
                                    state.norm_factor, u_half)
    mc = float(norms.mean())
    exact = isometry_functional(RIESZ, 1.0, 0.25, GaussianBump(), 0.5, reversed=True)
    assert abs(mc - exact) / exact < 0.10


def test_burkholder_style_bound_forced_run():
    """The MC second moment never exceeds the quadrature bound
    int_0^t ||Z||_L2^2 sup_xi J(xi, s) ds (second-moment Burkholder with
    constant 1)."""
    from fracwave.quadrature import weighted_kernel_integral

    grid = lattice.make_grid(1, 8.0, 128)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ, grid=grid,
        dt=2.0**-7, sigma=solver.ZERO, b=solver.ZERO,
        v0=solver.zero_field(grid), v0_tilde=solver.zero_field(grid),
        alpha=0.25, seed=99, forced_z=lattice.gaussian_bump(grid))
    n_paths = 300
    result = solver.run_batch(cfg, list(range(n_paths)), [0.5], t_final=0.5)
    state = result["state"]
    u_half, _ = result["snapshots"][0.5]
    norms = solver._half_sobolev_sq(grid, cfg.alpha, state.radius, state.pair,
                                    state.norm_factor, u_half)
    mc = float(norms.mean())
    se = float(norms.std(ddof=1) / math.sqrt(n_paths))
    # spectral mass of Z (Plancherel: (2 pi)^d times the physical L2 mass)
    z_mass = (2 * np.pi) ** grid.d * lattice.lattice_l2_norm(grid, cfg.forced_z) ** 2
    # piecewise-constant majorant of sup_xi J(xi, s) over s in [0, 0.5]
    xi_grid = [0.0, 0.5, 1.0, 2.0, 4.0]
    s_grid = np.linspace(0.05, 0.5, 10)
    sup_vals = [max(weighted_kernel_integral(RIESZ, 1.0, 0.25, s, [x])
                    for x in xi_grid) for s in s_grid]
    bound = z_mass * 0.05 * sum(sup_vals) * 1.2  # upper Riemann pad
    assert mc <= bound + 3 * se


# ---------------------------------------------------------------------------
# Weak dt-refinement and moment boundedness
# ---------------------------------------------------------------------------

def test_dt_refinement_first_order_weak_convergence():
    """Halving dt moves E||u(T)||^2 by a consistently shrinking amount."""
    grid = lattice.make_grid(1, 8.0, 64)
    estimates = []
    for dt in (2.0**-3, 2.0**-4, 2.0**-5):
        cfg = solver.SolverConfig(
            params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ,
            grid=grid, dt=dt, sigma=solver.linear_fn(1.0), b=solver.ZERO,
            v0=lattice.gaussian_bump(grid), v0_tilde=solver.zero_field(grid),
            alpha=0.0, seed=500)
        result = solver.run_batch(cfg, list(range(500)), [0.5], t_final=0.5)
        state = result["state"]
        u_half, _ = result["snapshots"][0.5]
        norms = solver._half_sobolev_sq(grid, 0.0, state.radius, state.pair,
                                        state.norm_factor, u_half)
        estimates.append(float(norms.mean()))
    d1 = abs(estimates[1] - estimates[0])
    d2 = abs(estimates[2] - estimates[1])
    assert d2 < d1  # refinement differences shrink
    assert 0.2 < d2 / d1 < 0.85  # consistent with ~first-order weak error


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

def test_picard_linear_noise_free_is_exact_immediately():
    grid = lattice.make_grid(1, 8.0, 32)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5),
        measure=model.FlatDensity(level=0.0, d=1), grid=grid, dt=2.0**-5,
        sigma=solver.ZERO, b=solver.ZERO, v0=lattice.gaussian_bump(grid),
        v0_tilde=solver.zero_field(grid), alpha=0.0, seed=1)
    result = solver.picard_iterate(cfg, n_iters=3)
    assert all(d < 1e-14 for d in result.distances)


def test_picard_contracts_and_matches_solve_path():
    grid = lattice.make_grid(1, 8.0, 64)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ, grid=grid,
        dt=0.5 / 2**7, sigma=solver.linear_fn(0.5), b=solver.ZERO,
        v0=lattice.gaussian_bump(grid), v0_tilde=solver.zero_field(grid),
        alpha=0.0, seed=271828)
    result = solver.picard_iterate(cfg, n_iters=20)
    ratios = [result.distances[i + 1] / result.distances[i] for i in range(5)]
    assert all(r < 0.9 for r in ratios)
    traj = solver.solve_path(cfg, snapshot_times=[0.0, 0.5], record_norms=False)
    gap = lattice.lattice_l2_norm(grid, traj.states[-1].position.values()
                                  - result.fixed_point)
    assert gap < 1e-8


def test_config_validation():
    with pytest.raises(DomainError):
        _config(dt=2.0)  # dt > T
    bad = np.zeros(GRID.shape)
    bad[0] = np.inf
    with pytest.raises(DomainError):
        _config(v0=bad)
    with pytest.raises(DomainError):
        _config(grid=lattice.make_grid(2, 8.0, 16))  # dimension mismatch
