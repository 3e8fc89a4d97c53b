"""ximpact: cross-impact kernel estimation for binned market panels.

Estimates the lagged linear response of prices to signed order flow across
assets, decomposes return covariance into impact-mediated and noise parts,
and validates every estimator against a synthetic market with known truth.
"""
from .decomp import (
    ChannelSplit,
    CovDecomposition,
    decompose,
    model_covariance,
    model_response,
    split_channels,
)
from .errors import XImpactError
from .kernels import (
    DecayShape,
    Kernel,
    duplicate_asset,
    fit_decay,
    fit_factorized,
    fit_homogeneous,
    fit_nonparametric,
    full_family_size,
    neg_loglik,
    residuals,
    score,
)
from .lagstats import LagStats, compute_lag_stats, lag_profiles
from .panel import Panel, load_panel, panel_from_arrays
from .scaling import ScalingCurve, bootstrap_scaling
from .spectra import (
    band_fraction,
    common_modes_fraction,
    eig_sym,
    marchenko_pastur_density,
    marchenko_pastur_edges,
    noise_baseline,
    svd_modes,
)
from .synth import MarketSpec, SimResult, simulate_market, write_market

__version__ = "0.1.0"

__all__ = [
    "ChannelSplit",
    "CovDecomposition",
    "DecayShape",
    "Kernel",
    "LagStats",
    "MarketSpec",
    "Panel",
    "ScalingCurve",
    "SimResult",
    "XImpactError",
    "band_fraction",
    "bootstrap_scaling",
    "common_modes_fraction",
    "compute_lag_stats",
    "decompose",
    "duplicate_asset",
    "eig_sym",
    "fit_decay",
    "fit_factorized",
    "fit_homogeneous",
    "fit_nonparametric",
    "full_family_size",
    "lag_profiles",
    "load_panel",
    "marchenko_pastur_density",
    "marchenko_pastur_edges",
    "model_covariance",
    "model_response",
    "neg_loglik",
    "noise_baseline",
    "panel_from_arrays",
    "residuals",
    "score",
    "simulate_market",
    "split_channels",
    "svd_modes",
    "write_market",
    "__version__",
]
