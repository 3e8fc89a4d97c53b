"""Figure rendering for the report stage.

Renders the assembled data tables to PNG files next to their CSVs.  All
rendering targets files (Agg backend); nothing here opens a window.  Figures
are deterministic for fixed inputs and library versions.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .spectra import marchenko_pastur_density

__all__ = [
    "save_figure",
    "kernel_mean_table",
    "fig_lag_profiles",
    "fig_kernel_means",
    "fig_explained",
    "fig_spectrum",
]

DPI = 120


def save_figure(fig: plt.Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def kernel_mean_table(big_g: np.ndarray) -> pd.DataFrame:
    """Class means of an integrated kernel stack (lags 1..L on axis 0)."""
    lags, n, _ = big_g.shape
    diag = np.trace(big_g, axis1=1, axis2=2) / n
    if n > 1:
        off = (big_g.sum(axis=(1, 2)) - diag * n) / (n * n - n)
    else:
        off = np.full(lags, np.nan)
    return pd.DataFrame({"tau": np.arange(1, lags + 1), "g_diag": diag, "g_off": off})


def _plot_pair(ax, frame: pd.DataFrame, diag_stat: str, off_stat: str, title: str) -> None:
    for stat, label, marker in ((diag_stat, "diagonal", "o"), (off_stat, "off-diagonal", "s")):
        part = frame[frame["statistic"] == stat]
        if part.empty:
            continue
        ax.errorbar(part["lag"], part["value"], yerr=part["stderr"],
                    label=label, marker=marker, ms=3, lw=1, capsize=2)
    ax.set_title(title)
    ax.set_xlabel("lag (bins)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)


def fig_lag_profiles(profiles: pd.DataFrame) -> plt.Figure:
    """Four-panel lag profiles: return/sign covariances per lag, sign memory, response."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 7), constrained_layout=True)
    _plot_pair(axes[0, 0], profiles, "sigma_diag_over_tau", "sigma_off_over_tau",
               "return covariance / lag")
    _plot_pair(axes[0, 1], profiles, "sign_cum_diag_over_tau", "sign_cum_off_over_tau",
               "sign covariance / lag")
    _plot_pair(axes[1, 0], profiles, "sign_corr_diag", "sign_corr_off",
               "sign autocorrelation")
    axes[1, 0].set_xscale("log")
    axes[1, 0].set_yscale("log")
    _plot_pair(axes[1, 1], profiles, "response_diag", "response_off",
               "integrated response")
    return fig


def fig_kernel_means(table: pd.DataFrame) -> plt.Figure:
    """Integrated-kernel class means against lag, log-log."""
    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    ax.loglog(table["tau"], table["g_diag"], "o-", ms=3, lw=1, label="diagonal")
    off = table["g_off"]
    if np.isfinite(off).any():
        ax.loglog(table["tau"], off.abs(), "s-", ms=3, lw=1, label="|off-diagonal|")
    ax.set_xlabel("lag (bins)")
    ax.set_ylabel("integrated kernel mean")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    return fig


def fig_explained(table: pd.DataFrame) -> plt.Figure:
    """Fraction of return covariance carried by the impact part, per horizon."""
    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    ax.plot(table["tau"], table["explained_diag"], "o-", ms=4, lw=1, label="diagonal")
    ax.plot(table["tau"], table["explained_off"], "s-", ms=4, lw=1, label="off-diagonal")
    ax.set_xlabel("horizon (bins)")
    ax.set_ylabel("explained fraction")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return fig


def fig_spectrum(
    eigvals: np.ndarray,
    q: float,
    variance: float,
    common: pd.DataFrame | None = None,
) -> plt.Figure:
    """Eigenvalue histogram against the pure-noise density, plus shared modes."""
    n_panels = 2 if common is not None else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(5.5 * n_panels, 4),
                             constrained_layout=True, squeeze=False)
    ax = axes[0, 0]
    ax.hist(eigvals, bins=60, density=True, alpha=0.6, label="eigenvalues")
    grid = np.linspace(0, max(float(np.max(eigvals)) * 1.05, 1e-6), 400)
    ax.plot(grid, marchenko_pastur_density(grid, q, variance), lw=1.5,
            label="noise density")
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    if common is not None:
        ax2 = axes[0, 1]
        ax2.plot(common["n_modes"], common["value"], "o-", ms=4, lw=1, label="observed")
        if "noise_mean" in common:
            ax2.plot(common["n_modes"], common["noise_mean"], "--", lw=1,
                     label="noise floor")
        ax2.set_xlabel("modes compared")
        ax2.set_ylabel("fraction of common modes")
        ax2.set_ylim(0, 1.05)
        ax2.legend(fontsize=8)
        ax2.grid(alpha=0.3)
    return fig
