"""Synthetic market generator: known moments, determinism, file output."""
from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from ximpact.decomp import model_covariance
from ximpact.errors import DimensionMismatch, InvalidGamma, NotPSD
from ximpact.kernels import DecayShape, Kernel
from ximpact.synth import (
    BASE_COUNT,
    IMBALANCE_SCALE,
    PRICE_SCALE,
    MarketSpec,
    block_correlation,
    exchangeable_correlation,
    fgn_autocorr,
    gen_fgn,
    market_frame,
    simulate_market,
    write_market,
)


def homogeneous_spec(n=2, n_bins=400, **kwargs):
    kernel = Kernel.homogeneous(0.2, 0.03, n, DecayShape(0.3, 1.0), 6)
    defaults = dict(sign_gamma=0.5, hard_signs=True, seed=7)
    defaults.update(kwargs)
    return MarketSpec(kernel=kernel, n_bins=n_bins, **defaults)


@pytest.fixture(scope="module")
def long_market():
    spec = homogeneous_spec(
        n_bins=200_000, sign_correlation=exchangeable_correlation(2, 0.3)
    )
    return simulate_market(spec)


# ------------------------------------------------------------ sign correlation

def test_fgn_autocorr_values():
    rho = fgn_autocorr(0.5, 5)
    assert rho[0] == 1.0
    assert rho[1] == pytest.approx(2.0 ** 1.5 / 2.0 - 1.0)
    assert rho[2] == pytest.approx(0.5 * (3.0 ** 1.5 - 2.0 * 2.0 ** 1.5 + 1.0))
    assert np.all(np.diff(rho) < 0) and np.all(rho > 0)


def test_fgn_autocorr_boundary_is_white():
    rho = fgn_autocorr(1.0, 6)
    np.testing.assert_allclose(rho, np.r_[1.0, np.zeros(6)], atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, -0.3, 1.2])
def test_fgn_autocorr_rejects_bad_exponent(gamma):
    with pytest.raises(InvalidGamma):
        fgn_autocorr(gamma, 4)


def test_gen_fgn_matches_target_moments():
    rng = np.random.default_rng(0)
    series = gen_fgn(200_000, 0.5, rng)
    assert series.shape == (200_000,)
    assert series.var() == pytest.approx(1.0, rel=0.03)
    rho = fgn_autocorr(0.5, 3)
    for s in (1, 2, 3):
        sample = np.mean(series[s:] * series[:-s])
        assert sample == pytest.approx(rho[s], abs=0.02)


def test_gen_fgn_is_deterministic():
    a = gen_fgn(100, 0.4, np.random.default_rng(3))
    b = gen_fgn(100, 0.4, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_correlation_builders():
    np.testing.assert_array_equal(
        exchangeable_correlation(3, 0.2),
        np.array([[1.0, 0.2, 0.2], [0.2, 1.0, 0.2], [0.2, 0.2, 1.0]]),
    )
    np.testing.assert_array_equal(
        block_correlation(["a", "a", "b"], 0.5, 0.1),
        np.array([[1.0, 0.5, 0.1], [0.5, 1.0, 0.1], [0.1, 0.1, 1.0]]),
    )


# ----------------------------------------------------------------- market spec

def test_spec_defaults():
    spec = homogeneous_spec(n=3)
    assert spec.assets == ["A000", "A001", "A002"]
    assert spec.warmup == 2 * spec.kernel.support
    np.testing.assert_array_equal(spec.sign_correlation, np.eye(3))


def test_spec_rejects_misshaped_correlation():
    with pytest.raises(DimensionMismatch):
        homogeneous_spec(n=3, sign_correlation=np.eye(2))


def test_true_sign_correlation_hard_signs_apply_arcsine():
    spec = homogeneous_spec(sign_correlation=exchangeable_correlation(2, 0.3))
    c = spec.true_sign_correlation(2)
    assert sorted(c) == [-2, -1, 0, 1, 2]
    rho = fgn_autocorr(0.5, 2)
    for s in (0, 1, 2):
        expected = (2.0 / np.pi) * np.arcsin(
            rho[s] * exchangeable_correlation(2, 0.3)
        )
        np.testing.assert_allclose(c[s], expected, atol=1e-14)
        np.testing.assert_array_equal(c[-s], c[s].T)
    assert c[0][0, 0] == pytest.approx(1.0)


def test_true_sign_correlation_soft_and_white():
    soft = homogeneous_spec(hard_signs=False,
                            sign_correlation=exchangeable_correlation(2, 0.3))
    rho = fgn_autocorr(0.5, 1)
    np.testing.assert_allclose(
        soft.true_sign_correlation(1)[1],
        rho[1] * exchangeable_correlation(2, 0.3), atol=1e-14)
    white = homogeneous_spec(sign_gamma=None)
    c = white.true_sign_correlation(3)
    np.testing.assert_array_equal(c[0], np.eye(2))
    for s in (1, 2, 3):
        np.testing.assert_array_equal(c[s], np.zeros((2, 2)))


def test_true_sigma_w_calibrates_unit_single_bin_variance():
    spec = homogeneous_spec(sign_correlation=exchangeable_correlation(2, 0.3))
    sigma_w = spec.true_sigma_w()
    c = spec.true_sign_correlation(spec.kernel.support + 1)
    impact, _ = model_covariance(spec.kernel, c, 1)
    total = impact + sigma_w
    np.testing.assert_allclose(np.diagonal(total), np.ones(2), atol=1e-12)


def test_true_sigma_w_explicit_values():
    spec = homogeneous_spec(noise_diag=0.6, noise_off=0.1)
    np.testing.assert_allclose(
        spec.true_sigma_w(), np.array([[0.6, 0.1], [0.1, 0.6]]), atol=1e-15)
    given = np.diag([0.5, 0.7])
    np.testing.assert_array_equal(
        homogeneous_spec(sigma_w=given).true_sigma_w(), given)


def test_true_sigma_w_rejects_impossible_targets():
    big = Kernel.homogeneous(2.0, 0.0, 2, DecayShape(0.05, 1.0), 6)
    with pytest.raises(NotPSD, match="unit-variance"):
        MarketSpec(kernel=big, n_bins=10, sign_gamma=0.5).true_sigma_w()
    with pytest.raises(NotPSD, match="positive semidefinite"):
        homogeneous_spec(noise_diag=0.1, noise_off=0.5).true_sigma_w()


def test_simulation_rejects_non_psd_sign_correlation():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPSD):
        simulate_market(homogeneous_spec(sign_correlation=bad, noise_diag=0.5))


# ------------------------------------------------------------------ simulation

def test_simulation_is_deterministic():
    a = simulate_market(homogeneous_spec(seed=5))
    b = simulate_market(homogeneous_spec(seed=5))
    np.testing.assert_array_equal(a.returns, b.returns)
    np.testing.assert_array_equal(a.signs, b.signs)
    other = simulate_market(homogeneous_spec(seed=6))
    assert not np.array_equal(a.returns, other.returns)


def test_hard_signs_are_exactly_unit(long_market):
    assert set(np.unique(long_market.signs)) == {-1.0, 1.0}


def test_soft_signs_stay_continuous():
    res = simulate_market(homogeneous_spec(hard_signs=False))
    assert np.abs(res.signs).max() > 1.0
    assert res.signs.var() == pytest.approx(1.0, rel=0.2)


def test_returns_follow_the_lagged_model_exactly():
    spec = homogeneous_spec(n=3, sigma_w=np.zeros((3, 3)), seed=11,
                            sign_correlation=exchangeable_correlation(3, 0.2))
    res = simulate_market(spec)
    g = spec.kernel.differential()
    lags = spec.kernel.support
    rows = np.arange(lags, spec.n_bins)
    expected = sum(res.signs[rows - s] @ g[s - 1].T for s in range(1, lags + 1))
    np.testing.assert_allclose(res.returns[rows], expected, atol=1e-6)
    assert res.returns.shape == (spec.n_bins, 3)
    assert res.signs.shape == (spec.n_bins, 3)


def test_long_run_variance_is_calibrated(long_market):
    np.testing.assert_allclose(
        long_market.returns.var(axis=0), np.ones(2), rtol=0.05)


def test_empirical_sign_correlation_matches_truth(long_market):
    truth = long_market.spec.true_sign_correlation(3)
    eps = long_market.signs
    t = len(eps)
    for s in range(4):
        sample = eps[s:].T @ eps[: t - s] / (t - s)
        np.testing.assert_allclose(sample, truth[s], atol=0.02,
                                   err_msg=f"lag {s}")


def test_result_panel_carries_assets_and_sectors():
    spec = homogeneous_spec(n=4, sectors=["S0", "S0", "S1", "S1"])
    panel = simulate_market(spec).panel(normalize=True)
    assert panel.assets == spec.assets
    assert panel.sector_list() == ["S0", "S0", "S1", "S1"]
    np.testing.assert_allclose(panel.returns.std(axis=0), np.ones(4), atol=1e-12)


# ----------------------------------------------------------------- file output

def test_market_frame_layout():
    res = simulate_market(homogeneous_spec(n_bins=360))
    frame = market_frame(res)
    assert list(frame.columns) == ["time", "asset", "price", "n_buy", "n_sell"]
    assert len(frame) == 360 * 2
    one = frame[frame["asset"] == "A000"].reset_index(drop=True)
    assert one["time"].iloc[0] == pd.Timestamp("2012-01-02 08:05:00")
    assert one["time"].iloc[179] == pd.Timestamp("2012-01-02 23:00:00")
    assert one["time"].iloc[180] == pd.Timestamp("2012-01-03 08:05:00")
    # hard signs put the whole imbalance on one side of the count floor
    counts = set(one["n_buy"]).union(one["n_sell"])
    assert counts == {BASE_COUNT, BASE_COUNT + IMBALANCE_SCALE}


def test_market_frame_prices_encode_returns():
    res = simulate_market(homogeneous_spec(n_bins=360))
    one = market_frame(res)
    one = one[one["asset"] == "A001"].reset_index(drop=True)
    log_price = np.log(one["price"].to_numpy())
    assert one["price"].iloc[0] == pytest.approx(100.0)
    # day boundary carries no increment; within-day steps are scaled returns
    assert log_price[180] == pytest.approx(log_price[179], abs=1e-15)
    inner = np.arange(1, 180)
    np.testing.assert_allclose(
        np.diff(log_price)[inner - 1],
        res.returns[inner, 1] * PRICE_SCALE, atol=1e-13)


def test_write_market_round_trips_truth(tmp_path):
    spec = homogeneous_spec(n=3, n_bins=200, seed=9,
                            sectors=["S0", "S1", "S0"])
    res = simulate_market(spec)
    paths = write_market(res, tmp_path / "mkt")
    assert set(paths) == {"market", "truth", "sectors"}
    truth = json.loads(paths["truth"].read_text())
    assert truth["kind"] == "homogeneous"
    assert truth["n_assets"] == 3 and truth["n_bins"] == 200
    assert truth["g_diag"] == pytest.approx(0.2)
    assert truth["g_off"] == pytest.approx(0.03)
    assert truth["beta"] == pytest.approx(0.3)
    assert truth["tau0"] == pytest.approx(1.0)
    assert truth["seed"] == 9 and truth["hard_signs"] is True
    np.testing.assert_allclose(np.array(truth["sigma_w"]), spec.true_sigma_w())
    sectors = pd.read_csv(paths["sectors"])
    assert list(sectors["sector"]) == ["S0", "S1", "S0"]

    market = pd.read_csv(paths["market"], float_precision="round_trip")
    assert len(market) == 200 * 3
    # %.17g strings preserve the exact float prices
    reread = market[market["asset"] == "A000"]["price"].to_numpy()
    original = market_frame(res)
    original = original[original["asset"] == "A000"]["price"].to_numpy()
    np.testing.assert_array_equal(reread, original)


def test_write_market_skips_sectors_when_absent(tmp_path):
    res = simulate_market(homogeneous_spec(n_bins=40))
    paths = write_market(res, tmp_path)
    assert set(paths) == {"market", "truth"}
    assert not (tmp_path / "sectors.csv").exists()
