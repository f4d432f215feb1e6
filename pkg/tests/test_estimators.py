import math

import numpy as np
import pytest

from fracwave import estimators, lattice, model, solver
from fracwave.errors import DomainError

RIESZ = model.riesz_measure(0.5, 1)


def _config(n_grid=64, dt=2.0**-6, T=1.0, forced=True, seed=1234, alpha=0.25):
    grid = lattice.make_grid(1, 8.0, n_grid)
    return solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=T), measure=RIESZ, grid=grid,
        dt=dt, sigma=solver.ZERO, b=solver.ZERO,
        v0=solver.zero_field(grid), v0_tilde=solver.zero_field(grid),
        alpha=alpha, seed=seed,
        forced_z=lattice.gaussian_bump(grid) if forced else None)


def test_mc_moment_deterministic_data_zero_se():
    grid = lattice.make_grid(1, 8.0, 64)
    cfg = solver.SolverConfig(
        params=model.ModelParams(k=1.0, d=1, T=0.5), measure=RIESZ, grid=grid,
        dt=2.0**-5, sigma=solver.ZERO, b=solver.ZERO,
        v0=lattice.gaussian_bump(grid), v0_tilde=solver.zero_field(grid),
        alpha=0.25, seed=7)
    est = estimators.mc_moment(cfg, t=0.5, alpha=0.25, q=2.0, n_paths=8)
    assert est.std_error == 0.0
    traj = solver.solve_path(cfg, snapshot_times=[0.0, 0.5], record_norms=False)
    want = lattice.sobolev_norm(traj.states[-1].position, 0.25) ** 2
    assert est.mean == pytest.approx(want, rel=1e-12)


def test_mc_moment_jensen_consistency():
    cfg = _config(T=0.5, dt=2.0**-6)
    e2 = estimators.mc_moment(cfg, 0.5, 0.25, 2.0, n_paths=300)
    e4 = estimators.mc_moment(cfg, 0.5, 0.25, 4.0, n_paths=300)
    # E X^2 >= (E X)^2 with X = ||u||^2
    slack = 3 * (e4.std_error + 2 * e2.mean * e2.std_error)
    assert e4.mean >= e2.mean**2 - slack


def test_mc_moment_se_scaling_with_paths():
    cfg = _config(T=0.25, dt=2.0**-6)
    e1 = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=200)
    e4 = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=800)
    ratio = e4.std_error / e1.std_error
    assert 0.35 <= ratio <= 0.70  # ~0.5 expected


def test_mc_moment_deterministic_given_seed():
    cfg = _config(T=0.25, dt=2.0**-6, seed=555)
    a = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=64)
    b = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=64)
    assert a.mean == b.mean and a.std_error == b.std_error


def test_mc_moment_multiworker_matches_serial():
    cfg = _config(T=0.25, dt=2.0**-6, seed=556, n_grid=32)
    serial = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=260, workers=1)
    parallel = estimators.mc_moment(cfg, 0.25, 0.25, 2.0, n_paths=260, workers=2)
    assert parallel.mean == pytest.approx(serial.mean, rel=1e-12)


def test_mc_moment_validations():
    cfg = _config()
    with pytest.raises(DomainError):
        estimators.mc_moment(cfg, 0.5, 0.25, 2.0, n_paths=1)
    with pytest.raises(DomainError):
        estimators.mc_moment(cfg, 0.5, 0.25, 1.0, n_paths=4)
    with pytest.raises(DomainError):
        estimators.mc_moment(cfg, 2.0, 0.25, 2.0, n_paths=4)


# ---------------------------------------------------------------------------
# Scaling fits
# ---------------------------------------------------------------------------

def test_fit_scaling_recovers_exact_power_law():
    lags = [2.0**e for e in range(-8, -2)]
    means = [2.5 * h**1.37 for h in lags]
    ses = [m * 1e-6 for m in means]
    fit = estimators.fit_scaling(lags, means, ses, theory_slope=1.37)
    assert fit.slope == pytest.approx(1.37, abs=1e-3)
    assert fit.verdict == "consistent"
    assert fit.dropped_lag is None


def test_fit_scaling_drops_off_regime_largest_lag():
    lags = [2.0**e for e in range(-8, -1)]
    means = [2.5 * h**1.5 for h in lags]
    means[-1] *= 2.7  # the largest lag leaves the scaling regime
    ses = [m * 1e-4 for m in means]
    fit = estimators.fit_scaling(lags, means, ses, theory_slope=1.5)
    assert fit.dropped_lag == pytest.approx(max(lags))
    assert fit.slope == pytest.approx(1.5, abs=1e-3)


def test_fit_scaling_verdicts():
    lags = [2.0**e for e in range(-8, -2)]
    means = [1.1 * h**1.5 for h in lags]
    ses = [m * 1e-4 for m in means]
    fit = estimators.fit_scaling(lags, means, ses, theory_slope=1.9)
    assert fit.verdict == "inconsistent"
    near = estimators.fit_scaling(lags, means, ses, theory_slope=1.5 + 0.05)
    assert near.verdict == "inconclusive"


def test_fit_scaling_ci_calibration():
    """95% CIs cover the true slope in >= 90 of 100 noisy repetitions."""
    rng = np.random.default_rng(2024)
    lags = [2.0**e for e in range(-9, -2)]
    true_slope = 1.5
    rel_se = 0.02
    covered = 0
    for _ in range(100):
        means = np.array([3.0 * h**true_slope for h in lags])
        noisy = means * (1 + rel_se * rng.standard_normal(len(lags)))
        fit = estimators.fit_scaling(lags, noisy, rel_se * means, true_slope)
        lo, hi = fit.slope_ci
        covered += lo <= true_slope <= hi
    assert covered >= 90


def test_theory_slope_formula():
    assert estimators.theory_increment_slope(RIESZ, 1.0, 0.0, 2.0) == pytest.approx(1.5)
    assert estimators.theory_increment_slope(RIESZ, 1.0, 0.0, 4.0) == pytest.approx(3.0)
    mu2 = model.riesz_measure(1.0, 1, 1.0)
    assert estimators.theory_increment_slope(mu2, 2.0, 0.25, 2.0) == pytest.approx(1.25)
    with pytest.raises(DomainError):
        estimators.theory_increment_slope(model.FlatDensity(level=1.0, d=1), 1.0, 0.0, 2.0)


def test_mc_increment_scaling_smoke():
    """Small CRN run: sane fields and a slope in the right neighbourhood."""
    cfg = _config(n_grid=1024, dt=2.0**-9, T=1.0, seed=99, alpha=0.0)
    lags = [2.0**-5, 2.0**-4, 2.0**-3, 2.0**-2]
    fit = estimators.mc_increment_scaling(cfg, t1=0.5, lags=lags, alpha=0.0,
                                          q=2.0, n_paths=160)
    assert fit.theory_slope == pytest.approx(1.5)
    assert len(fit.moments) == 4
    assert all(m.n_paths == 160 for m in fit.moments)
    assert 1.2 < fit.slope < 1.9
    assert fit.slope_ci[0] < fit.slope < fit.slope_ci[1]


def test_mc_increment_scaling_validations():
    cfg = _config()
    with pytest.raises(DomainError):
        estimators.mc_increment_scaling(cfg, 0.5, [0.1, 0.2, 0.3], 0.0, 2.0, 8)
    with pytest.raises(DomainError):
        estimators.mc_increment_scaling(cfg, 0.9, [0.05, 0.1, 0.2, 0.4], 0.0, 2.0, 8)


# ---------------------------------------------------------------------------
# Regularity frontier
# ---------------------------------------------------------------------------

def test_frontier_alpha_zero_never_divergent():
    cfg = _config(T=0.25, dt=2.0**-8, n_grid=64, alpha=0.0)
    report = estimators.regularity_frontier(
        cfg, t=0.25, alpha_grid=[0.0], n_paths=48, grid_sizes=(64, 128, 256))
    assert report.verdicts[0.0] == "finite"


def test_frontier_detects_divergence_above_threshold():
    cfg = _config(T=0.25, dt=2.0**-9, n_grid=64, alpha=0.0, seed=31)
    report = estimators.regularity_frontier(
        cfg, t=0.25, alpha_grid=[0.3, 0.95], n_paths=96,
        grid_sizes=(128, 256, 512))
    assert report.verdicts[0.3] == "finite"
    assert report.verdicts[0.95] == "divergent"
    assert len(report.rows) == 6


def test_frontier_validates_alpha_grid():
    cfg = _config()
    with pytest.raises(DomainError):
        estimators.regularity_frontier(cfg, 0.5, [1.5], 8)
