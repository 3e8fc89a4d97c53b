"""Synthetic market generator with analytically known ground truth.

Simulates the propagator model directly: long-memory (or white) sign
imbalances with a chosen cross-sectional correlation drive returns through a
known kernel, plus white noise.  Every population quantity the estimators
target — the kernel, the lagged sign correlations, the noise covariance — is
available in closed form, so fits can be checked against truth rather than
against other fits.

Sign series are fractional Gaussian noise (autocorrelation ~ 0.5 * (2H)(2H-1)
* s^(2H-2) with H = 1 - gamma/2, i.e. a power-law tail with exponent gamma),
generated exactly by circulant embedding.  Hardened signs (+/-1) keep unit
variance by construction and their correlations follow the Gaussian arcsine
law, which the truth helpers apply.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .decomp import model_covariance
from .errors import DimensionMismatch, InvalidGamma, NotPSD
from .kernels import Kernel
from .panel import Panel, panel_from_arrays

__all__ = [
    "MarketSpec",
    "SimResult",
    "fgn_autocorr",
    "gen_fgn",
    "exchangeable_correlation",
    "block_correlation",
    "gen_signs",
    "gen_prices",
    "simulate_market",
    "market_frame",
    "write_market",
]

PRICE_SCALE = 1e-4       # returns are stored as 1e4 * log-price increments
IMBALANCE_SCALE = 1000   # stored trade-count imbalance per unit sign
BASE_COUNT = 500         # per-side count floor keeping both sides positive
BINS_PER_DAY = 180
BIN_MINUTES = 5
FIRST_DAY = "2012-01-02"
FIRST_END = "08:05:00"


def fgn_autocorr(gamma: float, max_lag: int) -> np.ndarray:
    """Autocorrelation 0..max_lag of fractional noise with tail exponent gamma."""
    if not 0.0 < gamma <= 1.0:
        raise InvalidGamma(f"tail exponent must lie in (0, 1], got {gamma}")
    h2 = 2.0 * (1.0 - gamma / 2.0)
    k = np.arange(max_lag + 1, dtype=float)
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def gen_fgn(n: int, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """Exact unit-variance fractional Gaussian noise by circulant embedding."""
    rho = fgn_autocorr(gamma, n)
    row = np.concatenate([rho, rho[n - 1:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * lam.max():
        raise InvalidGamma(f"circulant embedding failed for gamma={gamma}")
    lam = np.maximum(lam, 0.0)
    m = len(row)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    f = np.fft.fft(z * np.sqrt(lam / m))
    return f.real[:n]


def exchangeable_correlation(n: int, rho: float) -> np.ndarray:
    """Correlation matrix with a single common off-diagonal value."""
    out = np.full((n, n), float(rho))
    np.fill_diagonal(out, 1.0)
    return out


def block_correlation(
    sectors: list[str], rho_within: float, rho_between: float
) -> np.ndarray:
    """Correlation matrix with one level inside sectors and one across."""
    lab = np.asarray(sectors)
    same = lab[:, None] == lab[None, :]
    out = np.where(same, float(rho_within), float(rho_between))
    np.fill_diagonal(out, 1.0)
    return out


def _correlation_sqrt(corr: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() < -1e-10:
        raise NotPSD(f"sign correlation target has eigenvalue {vals.min():.3e}")
    return vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


@dataclass
class MarketSpec:
    """Everything needed to simulate one market and know its truth.

    ``noise_diag=None`` calibrates the noise so single-bin returns have unit
    variance in expectation, making the stored series directly comparable to
    a normalized panel.  ``sign_gamma=None`` draws white signs.
    """

    kernel: Kernel
    n_bins: int
    sign_gamma: float | None = 0.5
    sign_correlation: np.ndarray | None = None
    hard_signs: bool = True
    noise_diag: float | None = None
    noise_off: float = 0.0
    sigma_w: np.ndarray | None = None
    seed: int = 0
    warmup: int | None = None
    assets: list[str] = field(default_factory=list)
    sectors: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = self.kernel.n_assets
        if self.sign_correlation is None:
            self.sign_correlation = np.eye(n)
        self.sign_correlation = np.asarray(self.sign_correlation, dtype=float)
        if self.sign_correlation.shape != (n, n):
            raise DimensionMismatch(
                f"sign correlation must be {(n, n)}, got {self.sign_correlation.shape}"
            )
        if not self.assets:
            self.assets = [f"A{i:03d}" for i in range(n)]
        if self.warmup is None:
            self.warmup = 2 * self.kernel.support

    @property
    def n_assets(self) -> int:
        return self.kernel.n_assets

    def true_sign_correlation(self, max_lag: int) -> dict[int, np.ndarray]:
        """Population c_s = E[eps_{t+s} eps_t^T] on lags -max_lag..max_lag."""
        if self.sign_gamma is None:
            rho = np.zeros(max_lag + 1)
            rho[0] = 1.0
        else:
            rho = fgn_autocorr(self.sign_gamma, max_lag)
        out: dict[int, np.ndarray] = {}
        for s in range(max_lag + 1):
            c = rho[s] * self.sign_correlation
            if self.hard_signs:
                c = (2.0 / np.pi) * np.arcsin(np.clip(c, -1.0, 1.0))
            out[s] = c
            if s > 0:
                out[-s] = c.T
        return dict(sorted(out.items()))

    def true_sigma_w(self) -> np.ndarray:
        """Noise covariance, calibrating the diagonal to unit return variance."""
        if self.sigma_w is not None:
            return np.asarray(self.sigma_w, dtype=float)
        n = self.n_assets
        if self.noise_diag is None:
            c = self.true_sign_correlation(self.kernel.support + 1)
            impact, _ = model_covariance(self.kernel, c, 1, None, tail="zero")
            diag = 1.0 - float(np.diagonal(impact).mean())
            if diag <= 0:
                raise NotPSD("impact variance exceeds the unit-variance target")
        else:
            diag = float(self.noise_diag)
        out = self.noise_off * np.ones((n, n))
        np.fill_diagonal(out, diag)
        if np.linalg.eigvalsh(out).min() < 0:
            raise NotPSD("noise covariance is not positive semidefinite")
        return out


@dataclass
class SimResult:
    """Simulated series plus the spec that generated them."""

    spec: MarketSpec
    returns: np.ndarray
    signs: np.ndarray

    def panel(self, normalize: bool = False) -> Panel:
        sectors = None
        if self.spec.sectors:
            sectors = dict(zip(self.spec.assets, self.spec.sectors))
        return panel_from_arrays(
            self.returns,
            self.signs,
            assets=list(self.spec.assets),
            sectors=sectors,
            normalize=normalize,
        )


def gen_signs(spec: MarketSpec, rng_streams: list[np.random.Generator]) -> np.ndarray:
    """Draw the sign panel: independent streams per asset, then cross-mixed."""
    total = spec.n_bins + spec.warmup
    cols = []
    for i in range(spec.n_assets):
        if spec.sign_gamma is None:
            cols.append(rng_streams[i].standard_normal(total))
        else:
            cols.append(gen_fgn(total, spec.sign_gamma, rng_streams[i]))
    f = np.stack(cols, axis=1)
    eps = f @ _correlation_sqrt(spec.sign_correlation).T
    if spec.hard_signs:
        eps = np.where(eps >= 0, 1.0, -1.0)
    return eps


def gen_prices(
    spec: MarketSpec, eps: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Propagate signs through the kernel and add white noise."""
    g = spec.kernel.differential()
    x = np.zeros_like(eps)
    for s in range(1, spec.kernel.support + 1):
        x[s:] += eps[:-s] @ g[s - 1].T
    sigma_w = spec.true_sigma_w()
    root = np.linalg.cholesky(sigma_w + 1e-15 * np.eye(len(sigma_w)))
    x += rng.standard_normal(eps.shape) @ root.T
    return x


def simulate_market(spec: MarketSpec) -> SimResult:
    """Simulate the model, dropping warm-up rows so every bin has full history."""
    seq = np.random.SeedSequence(spec.seed)
    children = seq.spawn(spec.n_assets + 1)
    streams = [np.random.Generator(np.random.PCG64(c)) for c in children]
    eps = gen_signs(spec, streams[:-1])
    x = gen_prices(spec, eps, streams[-1])
    cut = spec.warmup
    return SimResult(spec=spec, returns=x[cut:], signs=eps[cut:])


def _timestamps(n_bins: int) -> pd.DatetimeIndex:
    """Bin-end stamps: consecutive days of evenly spaced bins."""
    n_days = -(-n_bins // BINS_PER_DAY)
    days = pd.date_range(FIRST_DAY, periods=n_days, freq="D")
    offsets = pd.Timestamp(f"{FIRST_DAY} {FIRST_END}") - pd.Timestamp(FIRST_DAY)
    within = pd.to_timedelta(np.arange(BINS_PER_DAY) * BIN_MINUTES, unit="m")
    stamps = (days.values[:, None] + offsets.to_timedelta64() + within.values[None, :])
    return pd.DatetimeIndex(stamps.ravel()[:n_bins])


def market_frame(result: SimResult) -> pd.DataFrame:
    """Long-format bin records equivalent to the simulated arrays.

    Prices exponentiate cumulated returns at a fixed scale; signs become
    buy/sell count imbalances on a count floor, exactly recoverable after
    normalization (hardened signs round-trip bit-exactly).
    """
    x, eps = result.returns, result.signs
    n_bins, n_assets = x.shape
    stamps = _timestamps(n_bins)
    day = stamps.normalize().to_numpy()
    first_of_day = np.r_[True, day[1:] != day[:-1]]

    frames = []
    for i, asset in enumerate(result.spec.assets):
        # First bin of each session carries an unmodelled level, not a return:
        # zero it so within-session differencing returns exactly x elsewhere.
        increments = np.where(first_of_day, 0.0, x[:, i])
        log_price = np.log(100.0) + np.cumsum(increments * PRICE_SCALE)
        imb = np.rint(eps[:, i] * IMBALANCE_SCALE).astype(np.int64)
        frames.append(pd.DataFrame({
            "time": stamps,
            "asset": asset,
            "price": np.exp(log_price),
            "n_buy": BASE_COUNT + np.maximum(imb, 0),
            "n_sell": BASE_COUNT + np.maximum(-imb, 0),
        }))
    out = pd.concat(frames, ignore_index=True)
    return out.sort_values(["time", "asset"], kind="stable", ignore_index=True)


def write_market(result: SimResult, out_dir: str | Path) -> dict[str, Path]:
    """Write market.csv, truth.json and (if sectored) sectors.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = market_frame(result)
    frame = frame.assign(
        time=frame["time"].dt.strftime("%Y-%m-%dT%H:%M:%S"),
        price=[f"{p:.17g}" for p in frame["price"]],
    )
    csv_path = out_dir / "market.csv"
    frame.to_csv(csv_path, index=False)

    spec = result.spec
    kernel = spec.kernel
    truth = {
        "kind": kernel.kind,
        "n_assets": spec.n_assets,
        "n_bins": spec.n_bins,
        "support": kernel.support,
        "seed": spec.seed,
        "sign_gamma": spec.sign_gamma,
        "hard_signs": spec.hard_signs,
        "sign_correlation": spec.sign_correlation.tolist(),
        "sigma_w": spec.true_sigma_w().tolist(),
        "g_matrix": None if kernel.g_matrix is None else kernel.g_matrix.tolist(),
        "g_diag": kernel.g_diag,
        "g_off": kernel.g_off,
        "beta": None if kernel.shape is None else kernel.shape.beta,
        "tau0": None if kernel.shape is None else kernel.shape.tau0,
        "assets": list(spec.assets),
        "sectors": list(spec.sectors),
    }
    truth_path = out_dir / "truth.json"
    truth_path.write_text(json.dumps(truth, indent=2) + "\n")

    paths = {"market": csv_path, "truth": truth_path}
    if spec.sectors:
        sec_path = out_dir / "sectors.csv"
        pd.DataFrame({"asset": spec.assets, "sector": spec.sectors}).to_csv(
            sec_path, index=False
        )
        paths["sectors"] = sec_path
    return paths
