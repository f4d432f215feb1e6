import numpy as np
import pytest

from fracwave import lattice
from fracwave.errors import DomainError


def test_make_grid_derived_quantities():
    g = lattice.make_grid(1, np.pi, 8)
    assert g.dx == pytest.approx(np.pi / 4)
    np.testing.assert_array_equal(g.axis_modes(), [0, 1, 2, 3, -4, -3, -2, -1])
    np.testing.assert_allclose(np.sort(g.axis_frequencies()), np.arange(-4, 4))


def test_make_grid_d2_mode_spacing():
    g = lattice.make_grid(2, 10.0, 256)
    assert g.dxi == pytest.approx(np.pi / 10)


def test_make_grid_rejects_bad_inputs():
    with pytest.raises(DomainError):
        lattice.make_grid(1, 1.0, 7)
    with pytest.raises(DomainError):
        lattice.make_grid(1, 1.0, 96)  # not a power of two
    with pytest.raises(DomainError):
        lattice.make_grid(4, 1.0, 16)
    with pytest.raises(DomainError):
        lattice.make_grid(1, -1.0, 16)


def test_transform_constant_field():
    g = lattice.make_grid(1, 4.0, 16)
    F = lattice.transform(g, np.full(g.shape, 2.5))
    assert F[0] == pytest.approx(2.5 * 2 * g.L)
    assert np.max(np.abs(F[1:])) < 1e-12


def test_transform_single_cosine():
    g = lattice.make_grid(1, 4.0, 32)
    x = g.axis_coordinates()
    F = lattice.transform(g, np.cos(g.dxi * x))
    # equal mass (2L)/2 at modes +/-1
    assert F[1] == pytest.approx((2 * g.L) / 2)
    assert F[-1] == pytest.approx((2 * g.L) / 2)
    others = np.abs(np.delete(F, [1, g.N - 1]))
    assert others.max() < 1e-10


def test_round_trip_identity():
    g = lattice.make_grid(2, 3.0, 32)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.shape)
    back = lattice.inverse_transform(g, lattice.transform(g, f))
    assert np.max(np.abs(back - f)) < 1e-12


def test_parseval():
    for d in (1, 2):
        g = lattice.make_grid(d, 5.0, 32)
        rng = np.random.default_rng(d)
        f = rng.standard_normal(g.shape)
        phys = g.dx**d * np.sum(f**2)
        spec = (2 * g.L) ** -d * np.sum(np.abs(lattice.transform(g, f)) ** 2)
        assert spec == pytest.approx(phys, rel=1e-12)


def test_sobolev_norm_zero_field():
    g = lattice.make_grid(1, 8.0, 64)
    field = lattice.SpectralField.from_values(g, np.zeros(g.shape))
    assert lattice.sobolev_norm(field, 1.3) == 0.0


def test_sobolev_norm_alpha0_equals_l2():
    g = lattice.make_grid(1, 8.0, 128)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(g.shape)
    field = lattice.SpectralField.from_values(g, f)
    assert lattice.sobolev_norm(field, 0.0) == pytest.approx(
        lattice.lattice_l2_norm(g, f), rel=1e-12)


def test_sobolev_norm_single_mode():
    g = lattice.make_grid(1, 8.0, 64)
    coeffs = np.zeros(g.shape, dtype=complex)
    j = 3
    amp = 2.2
    coeffs[j] = amp
    coeffs[-j] = amp  # keep the field real
    field = lattice.SpectralField(g, coeffs)
    xi = g.dxi * j
    per_mode = amp * (2 * np.pi) ** -0.5 * g.dxi**0.5 * (1 + xi**2) ** 0.25
    assert lattice.sobolev_norm(field, 0.5) == pytest.approx(
        np.sqrt(2) * per_mode, rel=1e-12)


def test_sobolev_norm_monotone_in_alpha():
    g = lattice.make_grid(1, 8.0, 64)
    rng = np.random.default_rng(2)
    field = lattice.SpectralField.from_values(g, rng.standard_normal(g.shape))
    norms = [lattice.sobolev_norm(field, a) for a in (-1.0, 0.0, 0.5, 1.0, 2.0)]
    assert all(b >= a for a, b in zip(norms, norms[1:]))


def test_hermitian_symmetry_preserved():
    for d in (1, 2):
        g = lattice.make_grid(d, 8.0, 32)
        rng = np.random.default_rng(3 + d)
        field = lattice.SpectralField.from_values(g, rng.standard_normal(g.shape))
        assert field.hermitian_asymmetry() < 1e-13 * np.abs(field.coefficients).max()


def test_gaussian_bump_values_and_transform():
    g = lattice.make_grid(1, 8.0, 256)
    f = lattice.gaussian_bump(g)
    center = np.argmin(np.abs(g.axis_coordinates()))
    assert f[center] == pytest.approx(1.0)
    F = lattice.transform(g, f)
    assert F[0].real == pytest.approx(np.sqrt(2 * np.pi), abs=1e-8)
    # closed-form pair at xi = 1
    j = int(round(1.0 / g.dxi))
    xi = g.dxi * j
    assert F[j].real == pytest.approx(np.sqrt(2 * np.pi) * np.exp(-xi**2 / 2), abs=1e-8)


def test_gaussian_bump_transform_matches_on_resolved_band():
    g = lattice.make_grid(1, 8.0, 128)
    F = lattice.transform(g, lattice.gaussian_bump(g))
    xi = g.axis_frequencies()
    band = np.abs(xi) <= g.N * np.pi / (2 * g.L) * 0.5
    closed = np.sqrt(2 * np.pi) * np.exp(-xi[band] ** 2 / 2)
    np.testing.assert_allclose(F[band].real, closed, atol=1e-8 * closed.max())


def test_gaussian_bump_small_L_warns():
    g = lattice.make_grid(1, 4.0, 64)
    with pytest.warns(UserWarning):
        lattice.gaussian_bump(g)


def test_grid_refinement_consistency_of_bump_norm():
    """Sobolev norms of the bump converge as N doubles (alpha <= 2)."""
    for alpha in (0.5, 2.0):
        norms = []
        for n in (32, 64, 128, 256):
            g = lattice.make_grid(1, 8.0, n)
            field = lattice.SpectralField.from_values(g, lattice.gaussian_bump(g))
            norms.append(lattice.sobolev_norm(field, alpha))
        diffs = np.abs(np.diff(norms))
        # successive differences shrink by at least 4x (or vanish)
        for a, b in zip(diffs[:-1], diffs[1:]):
            assert b <= a / 4 + 1e-13


def test_state_vector_requires_shared_grid():
    g1 = lattice.make_grid(1, 8.0, 32)
    g2 = lattice.make_grid(1, 8.0, 64)
    f1 = lattice.SpectralField.from_values(g1, np.zeros(g1.shape))
    f2 = lattice.SpectralField.from_values(g2, np.zeros(g2.shape))
    with pytest.raises(DomainError):
        lattice.StateVector(position=f1, velocity=f2)


def test_field_serialization_round_trip(tmp_path):
    g = lattice.make_grid(2, 6.0, 16)
    rng = np.random.default_rng(5)
    f = rng.standard_normal(g.shape)
    path = tmp_path / "snap.bin"
    lattice.save_field(path, g, f)
    g2, f2 = lattice.load_field(path)
    assert g2 == g
    np.testing.assert_array_equal(f2, f)
    # header is 16 bytes: int32 d, float64 L, int32 N, little-endian
    assert path.stat().st_size == 16 + 8 * g.N**g.d


def test_field_serialization_truncated_raises(tmp_path):
    g = lattice.make_grid(1, 2.0, 16)
    path = tmp_path / "snap.bin"
    lattice.save_field(path, g, np.zeros(g.shape))
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(DomainError):
        lattice.load_field(path)
