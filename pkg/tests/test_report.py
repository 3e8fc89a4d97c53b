"""Report tables and figure rendering (files only, Agg backend)."""
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from matplotlib.figure import Figure

from ximpact.kernels import DecayShape, Kernel
from ximpact.lagstats import compute_lag_stats, lag_profiles
from ximpact.report import (
    fig_explained,
    fig_kernel_means,
    fig_lag_profiles,
    fig_spectrum,
    kernel_mean_table,
    save_figure,
)
from ximpact.synth import MarketSpec, simulate_market


@pytest.fixture(scope="module")
def profiles():
    kernel = Kernel.homogeneous(0.25, 0.02, 3, DecayShape(0.3, 1.0), 4)
    spec = MarketSpec(kernel=kernel, n_bins=2000, sign_gamma=0.5,
                      hard_signs=True, seed=1)
    panel = simulate_market(spec).panel(normalize=True)
    return lag_profiles(compute_lag_stats(panel, tau_max=5, t_lag=6, tau_min=-2))


def test_kernel_mean_table_class_means():
    big_g = np.array([
        [[1.0, 0.2], [0.4, 2.0]],
        [[2.0, 0.6], [0.8, 3.0]],
    ])
    table = kernel_mean_table(big_g)
    assert list(table.columns) == ["tau", "g_diag", "g_off"]
    assert list(table["tau"]) == [1, 2]
    np.testing.assert_allclose(table["g_diag"], [1.5, 2.5])
    np.testing.assert_allclose(table["g_off"], [0.3, 0.7])


def test_kernel_mean_table_single_asset_has_no_off_class():
    table = kernel_mean_table(np.ones((3, 1, 1)))
    np.testing.assert_allclose(table["g_diag"], np.ones(3))
    assert table["g_off"].isna().all()


def test_save_figure_writes_png(tmp_path):
    fig = Figure()
    fig.subplots().plot([1, 2], [3, 4])
    out = save_figure(fig, tmp_path / "nested" / "plot.png")
    data = out.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 1000


def test_fig_lag_profiles_renders(tmp_path, profiles):
    expected = {
        "sigma_diag_over_tau", "sigma_off_over_tau",
        "sign_cum_diag_over_tau", "sign_cum_off_over_tau",
        "sign_corr_diag", "sign_corr_off", "response_diag", "response_off",
    }
    assert expected <= set(profiles["statistic"])
    fig = fig_lag_profiles(profiles)
    assert len(fig.axes) == 4
    assert save_figure(fig, tmp_path / "profiles.png").stat().st_size > 1000


def test_fig_kernel_means_renders(tmp_path):
    kernel = Kernel.homogeneous(0.25, -0.02, 3, DecayShape(0.3, 1.0), 6)
    table = kernel_mean_table(kernel.integrated(6))
    fig = fig_kernel_means(table)
    assert save_figure(fig, tmp_path / "means.png").stat().st_size > 1000


def test_fig_explained_renders(tmp_path):
    table = pd.DataFrame({
        "tau": [1, 5, 10],
        "explained_diag": [0.3, 0.25, 0.2],
        "explained_off": [0.9, 0.8, 0.7],
    })
    fig = fig_explained(table)
    assert save_figure(fig, tmp_path / "explained.png").stat().st_size > 1000


def test_fig_spectrum_with_and_without_common_modes(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((500, 50))
    eigvals = np.linalg.eigvalsh(x.T @ x / 500)
    lone = fig_spectrum(eigvals, q=0.1, variance=1.0)
    assert len(lone.axes) == 1
    assert save_figure(lone, tmp_path / "spec.png").stat().st_size > 1000

    common = pd.DataFrame({
        "n_modes": [1, 2, 5],
        "value": [0.9, 0.7, 0.5],
        "noise_mean": [0.3, 0.25, 0.2],
    })
    both = fig_spectrum(eigvals, q=0.1, variance=1.0, common=common)
    assert len(both.axes) == 2
    assert save_figure(both, tmp_path / "spec2.png").stat().st_size > 1000
