"""Lagged panel statistics: covariances, sign correlations, responses.

All estimators are sample moments over bin pairs; pairs straddling a session
boundary are skipped and every statistic divides by its own count of valid
pairs.  With intraday sessions the valid-pair count falls with the lag, so a
fixed full-sample denominator would shrink long-lag moments and masquerade as
a faster decay; per-lag denominators keep each moment unbiased at the price of
an exactly-PSD stacked lag-correlation operator (downstream solvers carry a
ridge term for that).  Standard errors come from batch means over contiguous
time blocks sharing the same boundaries at every lag.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DimensionMismatch, InsufficientData
from .panel import Panel

__all__ = [
    "LagStats",
    "compute_lag_stats",
    "return_covariance",
    "sign_covariance_cumulated",
    "lagged_sign_correlation",
    "response",
    "lag_profiles",
    "diag_mean",
    "off_mean",
]

N_BLOCKS = 20


def diag_mean(matrix: np.ndarray) -> float:
    """Mean of the diagonal entries."""
    return float(np.trace(matrix)) / matrix.shape[0]


def off_mean(matrix: np.ndarray) -> float:
    """Mean of the off-diagonal entries (nan for a single asset)."""
    n = matrix.shape[0]
    if n < 2:
        return float("nan")
    return float(matrix.sum() - np.trace(matrix)) / (n * n - n)


def _guard(t: int, lag: int, guard_fraction: float, what: str) -> None:
    if lag >= t:
        raise InsufficientData(f"{what}={lag} but only {t} bins available")
    if lag > guard_fraction * t:
        raise InsufficientData(
            f"{what}={lag} exceeds {guard_fraction:.0%} of the {t}-bin sample"
        )


def _batch_se(block_stats: np.ndarray) -> tuple[float, float]:
    """Standard error of the (diag mean, off mean) pair from block estimates."""
    out = []
    for col in range(2):
        vals = block_stats[:, col]
        vals = vals[np.isfinite(vals)]
        if len(vals) < 2:
            out.append(float("nan"))
        else:
            out.append(float(np.std(vals, ddof=1) / np.sqrt(len(vals))))
    return out[0], out[1]


def _class_pair(matrix: np.ndarray) -> tuple[float, float]:
    return diag_mean(matrix), off_mean(matrix)


def _lagged_blocks(
    left: np.ndarray,
    right: np.ndarray,
    shift: int,
    session_id: np.ndarray,
    n_blocks: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-block sums of ``left[t + shift] (x) right[t]`` over same-session pairs.

    Blocks partition absolute time, so block ``b`` covers the same window at
    every lag.  Returns ``(sums, valid_counts)``.
    """
    t_rows = left.shape[0]
    lo, hi = max(0, -shift), t_rows - max(0, shift)
    sums = np.zeros((n_blocks, left.shape[1], right.shape[1]))
    counts = np.zeros(n_blocks)
    if hi <= lo:
        return sums, counts
    base = np.arange(lo, hi)
    valid = session_id[base + shift] == session_id[base]
    block_id = (base * n_blocks) // t_rows
    for b in range(n_blocks):
        rows = base[(block_id == b) & valid]
        if len(rows):
            sums[b] = left[rows + shift].T @ right[rows]
        counts[b] = len(rows)
    return sums, counts


def _window_sums(matrix: np.ndarray, tau: int) -> np.ndarray:
    cum = np.vstack([np.zeros((1, matrix.shape[1])), np.cumsum(matrix, axis=0)])
    return cum[tau:] - cum[:-tau]


def _window_covariance(
    matrix: np.ndarray, session_id: np.ndarray, tau: int, n_blocks: int
) -> tuple[np.ndarray, tuple[float, float]]:
    """Mean outer product of tau-bin windows, plus batch SEs of the class means."""
    windows = _window_sums(matrix, tau)
    base = np.arange(len(windows))
    valid = session_id[base] == session_id[base + tau - 1]
    if not valid.any():
        raise InsufficientData(f"no complete {tau}-bin window inside any session")
    block_id = (base * n_blocks) // matrix.shape[0]
    n = matrix.shape[1]
    total = np.zeros((n, n))
    n_valid = 0
    block_stats = np.full((n_blocks, 2), np.nan)
    for b in range(n_blocks):
        rows = base[(block_id == b) & valid]
        if len(rows) == 0:
            continue
        s = windows[rows].T @ windows[rows]
        total += s
        n_valid += len(rows)
        block_stats[b] = _class_pair(s / len(rows))
    return total / n_valid, _batch_se(block_stats)


def return_covariance(
    panel: Panel,
    tau_max: int,
    guard_fraction: float = 0.1,
    n_blocks: int = N_BLOCKS,
) -> dict[int, np.ndarray]:
    """Covariance of tau-bin cumulative returns, for tau = 1..tau_max."""
    _guard(panel.n_bins, tau_max, guard_fraction, "tau_max")
    return {
        tau: _window_covariance(panel.returns, panel.session_id, tau, n_blocks)[0]
        for tau in range(1, tau_max + 1)
    }


def sign_covariance_cumulated(
    panel: Panel,
    tau_max: int,
    guard_fraction: float = 0.1,
    n_blocks: int = N_BLOCKS,
) -> dict[int, np.ndarray]:
    """Covariance of tau-bin cumulative sign imbalances, for tau = 1..tau_max."""
    _guard(panel.n_bins, tau_max, guard_fraction, "tau_max")
    return {
        tau: _window_covariance(panel.signs, panel.session_id, tau, n_blocks)[0]
        for tau in range(1, tau_max + 1)
    }


def lagged_sign_correlation(
    panel: Panel,
    t_lag: int,
    guard_fraction: float = 0.1,
    n_blocks: int = N_BLOCKS,
) -> dict[int, np.ndarray]:
    """Stationary sign correlation c_s = E[eps_{t+s} eps_t^T] for |s| <= t_lag.

    Each lag divides by its own count of same-session pairs.  Negative lags
    satisfy c_{-s} = c_s^T exactly.
    """
    _guard(panel.n_bins, t_lag, guard_fraction, "t_lag")
    out: dict[int, np.ndarray] = {}
    for s in range(0, t_lag + 1):
        sums, counts = _lagged_blocks(panel.signs, panel.signs, s, panel.session_id, n_blocks)
        n_valid = counts.sum()
        if n_valid == 0:
            raise InsufficientData(f"no same-session pair at lag {s}")
        c = sums.sum(axis=0) / n_valid
        out[s] = c
        if s > 0:
            out[-s] = c.T
    return dict(sorted(out.items()))


def response(
    panel: Panel,
    tau_min: int = 0,
    tau_max: int = 30,
    guard_fraction: float = 0.1,
    n_blocks: int = N_BLOCKS,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Price response to signs: integrated R_tau and differential r_tau.

    ``r[u] = E[x_{t+u} eps_t^T]`` over same-session pairs; the integrated
    response is its cumulative sum with ``R_0 = 0``, and negative lags probe
    how signs follow past returns.  Returns ``(R, r)`` on ``tau_min..tau_max``.
    """
    stats = _response_stats(panel, tau_min, tau_max, guard_fraction, n_blocks)
    return stats[0], stats[1]


def _response_stats(
    panel: Panel,
    tau_min: int,
    tau_max: int,
    guard_fraction: float,
    n_blocks: int,
):
    if tau_min > tau_max:
        raise DimensionMismatch("tau_min must not exceed tau_max")
    _guard(panel.n_bins, max(abs(tau_min), abs(tau_max), 1), guard_fraction, "tau")
    n = panel.n_assets
    lo = min(tau_min, 0)

    r: dict[int, np.ndarray] = {}
    r_blocks: dict[int, np.ndarray] = {}
    for u in range(lo, tau_max + 1):
        sums, counts = _lagged_blocks(panel.returns, panel.signs, u, panel.session_id, n_blocks)
        n_valid = counts.sum()
        if n_valid == 0:
            raise InsufficientData(f"no same-session pair at lag {u}")
        r[u] = sums.sum(axis=0) / n_valid
        with np.errstate(invalid="ignore", divide="ignore"):
            r_blocks[u] = sums / np.where(counts > 0, counts, np.nan)[:, None, None]

    big_r: dict[int, np.ndarray] = {0: np.zeros((n, n))}
    big_blocks: dict[int, np.ndarray] = {0: np.zeros((n_blocks, n, n))}
    acc, acc_b = np.zeros((n, n)), np.zeros((n_blocks, n, n))
    for u in range(1, tau_max + 1):
        acc = acc + r[u]
        acc_b = acc_b + r_blocks[u]
        big_r[u], big_blocks[u] = acc.copy(), acc_b.copy()
    acc, acc_b = np.zeros((n, n)), np.zeros((n_blocks, n, n))
    for tau in range(-1, tau_min - 1, -1):
        acc = acc - r[tau + 1]
        acc_b = acc_b - r_blocks[tau + 1]
        big_r[tau], big_blocks[tau] = acc.copy(), acc_b.copy()

    big_r = dict(sorted((k, v) for k, v in big_r.items() if tau_min <= k <= tau_max))
    r_out = {u: r[u] for u in range(tau_min, tau_max + 1)}
    r_se = {
        u: _batch_se(np.asarray([_class_pair(m) for m in r_blocks[u]]))
        for u in r_out
    }
    big_r_se = {
        tau: _batch_se(np.asarray([_class_pair(m) for m in big_blocks[tau]]))
        for tau in big_r
    }
    return big_r, r_out, big_r_se, r_se


@dataclass
class LagStats:
    """Bundle of lagged statistics for one panel.

    ``sigma``/``c_cum`` map window length to covariance matrices; ``c`` maps
    signed lags to stationary sign correlations; ``big_r``/``r`` hold the
    integrated and differential responses.  ``*_se`` carry batch-means standard
    errors of the (diag mean, off mean) pair per lag.  ``t_eff`` is the number
    of panel rows behind the estimates.
    """

    n_assets: int
    t_eff: int
    tau_max: int
    t_lag: int
    tau_min: int
    sigma: dict[int, np.ndarray]
    c_cum: dict[int, np.ndarray]
    c: dict[int, np.ndarray]
    big_r: dict[int, np.ndarray]
    r: dict[int, np.ndarray]
    sigma_se: dict[int, tuple[float, float]] = field(default_factory=dict)
    c_cum_se: dict[int, tuple[float, float]] = field(default_factory=dict)
    r_se: dict[int, tuple[float, float]] = field(default_factory=dict)
    big_r_se: dict[int, tuple[float, float]] = field(default_factory=dict)
    c_se: dict[int, tuple[float, float]] = field(default_factory=dict)
    assets: list[str] = field(default_factory=list)
    sectors: list[str] = field(default_factory=list)

    @property
    def sigma_0(self) -> np.ndarray:
        """Return covariance at the single-bin horizon (model baseline)."""
        return self.sigma[1]

    def restrict(self, indices: list[int]) -> "LagStats":
        """Statistics of the sub-universe spanned by the given asset columns.

        Restriction commutes with every moment estimator, so slicing here is
        exactly equivalent to recomputing on ``panel.subset(indices)``.
        """
        idx = np.asarray(indices, dtype=int)
        pick = lambda m: {k: v[np.ix_(idx, idx)] for k, v in m.items()}
        return LagStats(
            n_assets=len(idx),
            t_eff=self.t_eff,
            tau_max=self.tau_max,
            t_lag=self.t_lag,
            tau_min=self.tau_min,
            sigma=pick(self.sigma),
            c_cum=pick(self.c_cum),
            c=pick(self.c),
            big_r=pick(self.big_r),
            r=pick(self.r),
            assets=[self.assets[i] for i in idx] if self.assets else [],
            sectors=[self.sectors[i] for i in idx] if self.sectors else [],
        )


def compute_lag_stats(
    panel: Panel,
    tau_max: int = 30,
    t_lag: int = 100,
    tau_min: int = -10,
    n_blocks: int = N_BLOCKS,
    guard_fraction: float = 0.1,
) -> LagStats:
    """Compute every lagged statistic the estimators need, with batch SEs."""
    _guard(panel.n_bins, max(tau_max, t_lag, abs(tau_min)), guard_fraction, "lag range")

    sigma, sigma_se = {}, {}
    c_cum, c_cum_se = {}, {}
    for tau in range(1, tau_max + 1):
        cov, se = _window_covariance(panel.returns, panel.session_id, tau, n_blocks)
        sigma[tau], sigma_se[tau] = cov, se
        cov, se = _window_covariance(panel.signs, panel.session_id, tau, n_blocks)
        c_cum[tau], c_cum_se[tau] = cov, se

    c, c_se = {}, {}
    for s in range(0, t_lag + 1):
        sums, counts = _lagged_blocks(panel.signs, panel.signs, s, panel.session_id, n_blocks)
        n_valid = counts.sum()
        if n_valid == 0:
            raise InsufficientData(f"no same-session pair at lag {s}")
        c[s] = sums.sum(axis=0) / n_valid
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / np.where(counts > 0, counts, np.nan)[:, None, None]
        c_se[s] = _batch_se(np.asarray([_class_pair(m) for m in means]))
        if s > 0:
            c[-s] = c[s].T
            c_se[-s] = c_se[s]
    c = dict(sorted(c.items()))

    big_r, r, big_r_se, r_se = _response_stats(panel, tau_min, tau_max, guard_fraction, n_blocks)

    return LagStats(
        n_assets=panel.n_assets,
        t_eff=panel.n_bins,
        tau_max=tau_max,
        t_lag=t_lag,
        tau_min=tau_min,
        sigma=sigma,
        c_cum=c_cum,
        c=c,
        big_r=big_r,
        r=r,
        sigma_se=sigma_se,
        c_cum_se=c_cum_se,
        r_se=r_se,
        big_r_se=big_r_se,
        c_se=c_se,
        assets=list(panel.assets),
        sectors=panel.sector_list(),
    )


def lag_profiles(stats: LagStats) -> pd.DataFrame:
    """Long-format table of diag/off lag profiles with batch-means errors.

    Window statistics are reported per unit lag (their flatness is the
    diffusivity diagnostic; the off/diag ratio is the cross-correlation
    signature across horizons).
    """
    rows = []

    def emit(stat: str, lag: int, value: float, err: float) -> None:
        rows.append({"statistic": stat, "lag": lag, "value": value, "stderr": err})

    for tau, m in stats.sigma.items():
        se = stats.sigma_se.get(tau, (float("nan"),) * 2)
        emit("sigma_diag_over_tau", tau, diag_mean(m) / tau, se[0] / tau)
        emit("sigma_off_over_tau", tau, off_mean(m) / tau, se[1] / tau)
    for tau, m in stats.c_cum.items():
        se = stats.c_cum_se.get(tau, (float("nan"),) * 2)
        emit("sign_cum_diag_over_tau", tau, diag_mean(m) / tau, se[0] / tau)
        emit("sign_cum_off_over_tau", tau, off_mean(m) / tau, se[1] / tau)
    for s, m in stats.c.items():
        if s < 1:
            continue
        se = stats.c_se.get(s, (float("nan"),) * 2)
        emit("sign_corr_diag", s, diag_mean(m), se[0])
        emit("sign_corr_off", s, off_mean(m), se[1])
    for tau, m in stats.big_r.items():
        se = stats.big_r_se.get(tau, (float("nan"),) * 2)
        emit("response_diag", tau, diag_mean(m), se[0])
        emit("response_off", tau, off_mean(m), se[1])
    for tau, m in stats.r.items():
        se = stats.r_se.get(tau, (float("nan"),) * 2)
        emit("response_diff_diag", tau, diag_mean(m), se[0])
        emit("response_diff_off", tau, off_mean(m), se[1])
    return pd.DataFrame(rows, columns=["statistic", "lag", "value", "stderr"])
