import numpy as np
import pytest

from fracwave import lattice, model, noise
from fracwave.errors import DomainError

GRID = lattice.make_grid(1, 8.0, 64)


def test_flat_density_amplitudes():
    spec = noise.NoiseSpec.build(model.FlatDensity(level=1.0, d=1), GRID)
    np.testing.assert_allclose(spec.amplitudes**2, GRID.dxi, rtol=1e-14)


def test_riesz_origin_cell_mass():
    mu = model.riesz_measure(0.5, 1, constant=1.0)
    spec = noise.NoiseSpec.build(mu, GRID)
    want = 4.0 * 1.0 * (GRID.dxi / 2) ** 0.5  # 2 c int_0^{dxi/2} r^-1/2 dr
    assert spec.amplitudes[0] ** 2 == pytest.approx(want, rel=1e-14)


def test_riesz_offorigin_cells_are_exact_masses():
    mu = model.riesz_measure(0.5, 1, constant=1.0)
    spec = noise.NoiseSpec.build(mu, GRID)
    xi = GRID.axis_frequencies()
    j = 5
    lo, hi = xi[j] - GRID.dxi / 2, xi[j] + GRID.dxi / 2
    exact = (hi**0.5 - lo**0.5) / 0.5
    assert spec.amplitudes[j] ** 2 == pytest.approx(exact, rel=1e-13)


def test_zero_measure_amplitudes():
    spec = noise.NoiseSpec.build(model.FlatDensity(level=0.0, d=1), GRID)
    assert np.all(spec.amplitudes == 0.0)
    inc = noise.sample_increment(spec, 0.5, seed=1)
    assert np.all(inc.field == 0.0)


def test_atom_snapping_and_symmetrization():
    xi = GRID.dxi
    atoms = model.FiniteAtoms.of([((3 * xi,), 0.8)])
    spec = noise.NoiseSpec.build(atoms, GRID)
    assert spec.amplitudes[3] ** 2 == pytest.approx(0.4)
    assert spec.amplitudes[-3] ** 2 == pytest.approx(0.4)
    assert float((spec.amplitudes**2).sum()) == pytest.approx(0.8)


def test_atom_outside_lattice_raises():
    atoms = model.FiniteAtoms.of([((1e6,), 1.0)])
    with pytest.raises(DomainError):
        noise.NoiseSpec.build(atoms, GRID)


def test_amplitudes_mirror_symmetric():
    mu = model.riesz_measure(0.5, 1)
    spec = noise.NoiseSpec.build(mu, GRID)
    amp = spec.amplitudes
    mirrored = np.roll(amp[::-1], 1)
    np.testing.assert_allclose(amp, mirrored, rtol=1e-14)


def test_sample_increment_field_is_real_and_deterministic():
    mu = model.riesz_measure(0.5, 1)
    spec = noise.NoiseSpec.build(mu, GRID)
    a = noise.sample_increment(spec, 0.25, seed=42, path_index=3, step_index=7)
    b = noise.sample_increment(spec, 0.25, seed=42, path_index=3, step_index=7)
    np.testing.assert_array_equal(a.field, b.field)
    c = noise.sample_increment(spec, 0.25, seed=42, path_index=3, step_index=8)
    assert not np.array_equal(a.field, c.field)
    # realness: reconstruct coefficients from the field and check symmetry
    coeff = lattice.transform(GRID, a.field)
    asym = lattice.SpectralField(GRID, coeff).hermitian_asymmetry()
    assert asym < 1e-12 * np.abs(coeff).max()


def test_stream_is_version_pinned():
    """Philox output contract: fixed (seed, path, step) gives fixed draws."""
    rng = noise.stream(12345, 6, 9)
    got = rng.standard_normal(4)
    want = np.array([np.float64(-1.1516202594499707), np.float64(-0.00614706908878802),
                     np.float64(-0.0809305959237313), np.float64(0.3588378931088598)])
    np.testing.assert_allclose(got, want, rtol=0, atol=0)


def test_mode_variances_match_construction():
    """E[h_j conj(h_j)] = amplitude_j^2 dt within Monte-Carlo error."""
    mu = model.riesz_measure(0.5, 1)
    grid = lattice.make_grid(1, 8.0, 32)
    spec = noise.NoiseSpec.build(mu, grid)
    dt, n = 0.7, 4000
    acc = np.zeros(grid.shape)
    cross = 0.0 + 0.0j
    for i in range(n):
        inc = noise.sample_increment(spec, dt, seed=7, step_index=i)
        acc += np.abs(inc.coefficients) ** 2
        cross += inc.coefficients[3] * np.conj(inc.coefficients[5])
    ratio = acc / (n * spec.amplitudes**2 * dt)
    # pair modes have Var(|h|^2)/E^2 = 1: 5 standard errors at n draws
    assert np.max(np.abs(ratio - 1.0)) < 5.0 * np.sqrt(2.0 / n)
    # distinct modes uncorrelated
    amp_scale = spec.amplitudes[3] * spec.amplitudes[5] * dt
    assert abs(cross) / (n * amp_scale) < 5.0 / np.sqrt(n)


def test_increment_scaling_with_dt():
    """dt = 4h increments have exactly 2x the per-mode standard deviation."""
    mu = model.FlatDensity(level=1.0, d=1)
    grid = lattice.make_grid(1, 8.0, 32)
    spec = noise.NoiseSpec.build(mu, grid)
    n = 4000
    var1 = np.zeros(grid.shape)
    var4 = np.zeros(grid.shape)
    for i in range(n):
        var1 += np.abs(noise.sample_increment(spec, 0.1, seed=9, step_index=i).coefficients) ** 2
        var4 += np.abs(noise.sample_increment(spec, 0.4, seed=10, step_index=i).coefficients) ** 2
    ratio = np.sqrt(var4.mean() / var1.mean())
    assert ratio == pytest.approx(2.0, abs=3 * 2.0 / np.sqrt(n))


def test_time_independence_of_increments():
    mu = model.FlatDensity(level=1.0, d=1)
    grid = lattice.make_grid(1, 8.0, 32)
    spec = noise.NoiseSpec.build(mu, grid)
    n = 3000
    corr = np.zeros(grid.shape)
    for i in range(n):
        a = noise.sample_increment(spec, 0.2, seed=11, step_index=2 * i).field
        b = noise.sample_increment(spec, 0.2, seed=11, step_index=2 * i + 1).field
        corr += a * b
    scale = np.sqrt(0.2 * (spec.amplitudes**2).sum()) ** 2  # var of field values
    assert np.max(np.abs(corr / n)) < 5 * scale * (2 * np.pi) / np.sqrt(n)


def test_stationarity_of_spatial_covariance():
    """Empirical covariance depends only on site separation."""
    mu = model.riesz_measure(0.5, 1)
    grid = lattice.make_grid(1, 8.0, 32)
    spec = noise.NoiseSpec.build(mu, grid)
    n = 10_000
    fields = np.stack([
        noise.sample_increment(spec, 1.0, seed=13, step_index=i).field
        for i in range(n)
    ])
    cov = fields.T @ fields / n  # (N, N) empirical covariance
    # periodic stationarity: cov[i, (i+sep) % N] must not depend on i
    n_sites = grid.N
    rows = np.empty_like(cov)
    for i in range(n_sites):
        rows[i] = np.roll(cov[i], -i)
    profile = rows.mean(axis=0)
    leakage = np.linalg.norm(rows - profile) / (
        np.sqrt(n_sites) * np.linalg.norm(profile))
    assert leakage < 0.05


def test_validate_covariance_passes_riesz_and_flat():
    grid = lattice.make_grid(1, 8.0, 64)
    for mu in (model.riesz_measure(0.5, 1), model.FlatDensity(level=1.0, d=1)):
        spec = noise.NoiseSpec.build(mu, grid)
        report = noise.validate_covariance(spec, 2000, seed=21)
        assert report.passed
        assert report.max_rel_deviation < 0.12


def test_validate_covariance_zero_measure_vacuous():
    spec = noise.NoiseSpec.build(model.FlatDensity(level=0.0, d=1), GRID)
    report = noise.validate_covariance(spec, 500, seed=3)
    assert report.passed
    assert report.n_modes_checked == 0


def test_validate_covariance_requires_samples():
    spec = noise.NoiseSpec.build(model.FlatDensity(level=1.0, d=1), GRID)
    with pytest.raises(DomainError):
        noise.validate_covariance(spec, 50)


def test_d2_sampling_real_and_symmetric():
    grid = lattice.make_grid(2, 8.0, 16)
    mu = model.riesz_measure(1.0, 2)
    spec = noise.NoiseSpec.build(mu, grid)
    inc = noise.sample_increment(spec, 0.3, seed=5)
    assert inc.field.shape == grid.shape
    coeff = lattice.transform(grid, inc.field)
    asym = lattice.SpectralField(grid, coeff).hermitian_asymmetry()
    assert asym < 1e-12 * np.abs(coeff).max()
