"""Size-dependence laws and the subset-bootstrap refitting machinery."""
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from ximpact.errors import ConfigError, NoSectorPairs, SubsetTooSmall
from ximpact.kernels import DecayShape, Kernel, _factor_moments, fit_decay
from ximpact.lagstats import compute_lag_stats
from ximpact.scaling import (
    bootstrap_scaling,
    fit_hyperbolic,
    fit_power_law,
    fit_power_offset,
)
from ximpact.synth import MarketSpec, exchangeable_correlation, simulate_market

SIZES = np.array([5.0, 10.0, 20.0, 40.0])


def make_panel(n=12, n_bins=6000, sectors=None, seed=3):
    kernel = Kernel.homogeneous(0.25, 0.02, n, DecayShape(0.3, 1.0), 6)
    spec = MarketSpec(
        kernel=kernel, n_bins=n_bins, sign_gamma=0.5,
        sign_correlation=exchangeable_correlation(n, 0.15),
        hard_signs=True, seed=seed, sectors=sectors or [],
    )
    return simulate_market(spec).panel(normalize=True)


@pytest.fixture(scope="module")
def panel():
    return make_panel()


# ------------------------------------------------------------------- law fits

def test_power_law_recovers_noiseless_curve():
    fit = fit_power_law(SIZES, 3.0 * SIZES ** -0.7)
    assert fit["k"] == pytest.approx(3.0, rel=1e-10)
    assert fit["nu"] == pytest.approx(0.7, rel=1e-10)
    assert fit["r2"] == pytest.approx(1.0, abs=1e-12)


def test_hyperbolic_recovers_noiseless_curve():
    fit = fit_hyperbolic(SIZES, 2.0 / (1.0 + SIZES / 15.0))
    assert fit["n0"] == pytest.approx(15.0, rel=1e-3)
    assert fit["k"] == pytest.approx(2.0, rel=1e-3)
    assert fit["r2"] == pytest.approx(1.0, abs=1e-9)


def test_power_offset_recovers_noiseless_curve():
    fit = fit_power_offset(SIZES, 1.5 * (1.0 + SIZES / 8.0) ** -1.2)
    assert fit["n0"] == pytest.approx(8.0, rel=1e-3)
    assert fit["k"] == pytest.approx(1.5, rel=1e-3)
    assert fit["nu"] == pytest.approx(1.2, rel=1e-3)
    assert fit["r2"] == pytest.approx(1.0, abs=1e-9)


def test_law_fits_return_nan_on_thin_data():
    assert np.isnan(fit_power_law([5.0], [1.0])["k"])
    assert np.isnan(fit_power_law(SIZES, [-1.0, 0.0, np.nan, -2.0])["nu"])
    assert np.isnan(fit_hyperbolic([5.0], [1.0])["n0"])
    # the three-parameter law needs a third usable point
    assert np.isnan(fit_power_offset([5.0, 10.0], [1.0, 0.5])["nu"])
    assert np.isnan(fit_power_law([5.0, 10.0], [2.0, 2.0])["r2"])


def test_law_fits_ignore_nonpositive_points():
    values = 3.0 * SIZES ** -0.7
    spoiled = np.r_[values, -1.0]
    fit = fit_power_law(np.r_[SIZES, 80.0], spoiled)
    assert fit["nu"] == pytest.approx(0.7, rel=1e-10)


# --------------------------------------------------------------- bootstrapping

def test_bootstrap_full_size_equals_direct_fit(panel):
    curve = bootstrap_scaling(panel, sizes=[12], n_samples=5, seed=0, lags=12)
    point = curve.points[0]
    # drawing 12 of 12 without replacement is always the whole universe
    assert point.se_diag == 0.0 and point.se_off == 0.0

    stats = compute_lag_stats(panel, tau_max=12, t_lag=11, tau_min=0)
    shape = fit_decay(stats)
    a, b = _factor_moments(stats, shape.weights(12))
    g = np.linalg.solve(b.T, a.T).T
    off = ~np.eye(12, dtype=bool)
    assert point.mean_diag == pytest.approx(np.diagonal(g).mean(), abs=1e-12)
    assert point.mean_off == pytest.approx(g[off].mean(), abs=1e-12)


def test_moment_slicing_commutes_with_panel_restriction(panel):
    stats = compute_lag_stats(panel, tau_max=10, t_lag=9, tau_min=0)
    psi = DecayShape(0.4, 1.2).weights(10)
    a_full, b_full = _factor_moments(stats, psi)
    idx = [0, 3, 7, 9]
    a_sub, b_sub = _factor_moments(stats.restrict(idx), psi)
    np.testing.assert_allclose(a_sub, a_full[np.ix_(idx, idx)], atol=1e-14)
    np.testing.assert_allclose(b_sub, b_full[np.ix_(idx, idx)], atol=1e-14)


def test_bootstrap_is_deterministic(panel):
    kwargs = dict(sizes=[3, 6], n_samples=8, seed=4, lags=10)
    first = bootstrap_scaling(panel, **kwargs)
    second = bootstrap_scaling(panel, **kwargs)
    pd.testing.assert_frame_equal(first.frame(), second.frame())
    assert first.fits == second.fits
    shifted = bootstrap_scaling(panel, sizes=[3, 6], n_samples=8, seed=5, lags=10)
    assert not first.frame().equals(shifted.frame())


def test_bootstrap_frame_layout(panel):
    curve = bootstrap_scaling(panel, sizes=[4, 8], n_samples=4, seed=0, lags=8)
    frame = curve.frame()
    assert list(frame.columns) == [
        "size", "n_samples", "mean_diag", "se_diag", "mean_off", "se_off",
        "mean_off_same", "se_off_same", "n_same_samples"]
    assert list(frame["size"]) == [4, 8]
    assert set(curve.fits) == {"diag", "off"}
    assert np.isfinite(frame["mean_diag"]).all()
    assert frame["n_same_samples"].eq(0).all()  # sectorless panel
    assert frame["mean_off_same"].isna().all()


def test_bootstrap_guards(panel):
    with pytest.raises(ConfigError, match="bootstrap samples"):
        bootstrap_scaling(panel, sizes=[4], n_samples=1)
    with pytest.raises(SubsetTooSmall, match="off-diagonal"):
        bootstrap_scaling(panel, sizes=[1], n_samples=4)
    with pytest.raises(SubsetTooSmall, match="universe"):
        bootstrap_scaling(panel, sizes=[13], n_samples=4)


def test_bootstrap_records_same_sector_means():
    sectors = ["S0"] * 6 + ["S1"] * 6
    panel = make_panel(sectors=sectors, n_bins=4000)
    curve = bootstrap_scaling(panel, sizes=[6, 12], n_samples=6, seed=1, lags=8)
    frame = curve.frame()
    # any 6-of-12 draw has at least 12 same-sector ordered pairs
    assert frame["n_same_samples"].eq(6).all()
    assert np.isfinite(frame["mean_off_same"]).all()
    assert "off_same" in curve.fits


def test_bootstrap_rejects_sectored_panel_without_pairs():
    sectors = [f"S{i}" for i in range(12)]  # singleton sectors: no same pairs
    panel = make_panel(sectors=sectors, n_bins=4000)
    with pytest.raises(NoSectorPairs):
        bootstrap_scaling(panel, sizes=[6], n_samples=4, seed=0, lags=8)


def test_bootstrap_refit_shape_runs(panel):
    curve = bootstrap_scaling(
        panel, sizes=[6], n_samples=2, seed=2, lags=8, refit_shape=True)
    assert np.isfinite(curve.points[0].mean_diag)


def test_bootstrap_accepts_fixed_shape(panel):
    shape = DecayShape(0.3, 1.0)
    curve = bootstrap_scaling(panel, sizes=[12], n_samples=2, seed=0, lags=8,
                              shape=shape)
    stats = compute_lag_stats(panel, tau_max=8, t_lag=7, tau_min=0)
    a, b = _factor_moments(stats, shape.weights(8))
    g = np.linalg.solve(b.T, a.T).T
    assert curve.points[0].mean_diag == pytest.approx(
        np.diagonal(g).mean(), abs=1e-12)
