"""Model-implied responses and covariance decomposition.

Given a kernel ``g`` and a sign-correlation family ``c_s``, the model implies

* a response curve      r_u = sum_s g_s c_{u-s},  R_tau = sum_{u<=tau} r_u,
* a return covariance   Sigma_tau = Sigma_impact(tau) + tau * sigma_w,

where the impact part sums the kernel-filtered sign correlations over the
window.  Both are finite sums for finite-support kernels.  The same machinery
splits responses into direct and mediated channels, asset class by asset
class.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import HorizonTooShort
from .kernels import Kernel
from .lagstats import LagStats, diag_mean, off_mean

__all__ = [
    "CovDecomposition",
    "ChannelSplit",
    "model_response",
    "model_covariance",
    "decompose",
    "split_channels",
    "decomposition_table",
    "channel_table",
]

log = logging.getLogger(__name__)


def _correlation_array(
    c: dict[int, np.ndarray], max_abs_lag: int, tail: str
) -> np.ndarray:
    """Dense array of sign correlations on lags -max_abs_lag..max_abs_lag.

    Lags beyond the available range are handled per ``tail``: ``"zero"`` pads,
    ``"extrapolate"`` continues a power law fitted to the trailing diagonal
    profile, ``"strict"`` refuses.
    """
    n = next(iter(c.values())).shape[0]
    s_max = max(k for k in c if k >= 0)
    out = np.zeros((2 * max_abs_lag + 1, n, n))
    for k in range(-max_abs_lag, max_abs_lag + 1):
        if k in c:
            out[k + max_abs_lag] = c[k]
        elif -k in c:
            out[k + max_abs_lag] = c[-k].T
    if max_abs_lag <= s_max or tail == "zero":
        return out
    if tail == "strict":
        raise HorizonTooShort(
            f"need sign correlations to lag {max_abs_lag}, have {s_max}"
        )
    if tail != "extrapolate":
        raise ValueError(f"unknown tail mode {tail!r}")

    lo = max(1, s_max // 2)
    lags = np.arange(lo, s_max + 1)
    vals = np.array([diag_mean(c[s]) for s in lags])
    if np.any(vals <= 0):
        log.warning("nonpositive correlation tail; falling back to zero padding")
        return out
    slope = np.polyfit(np.log(lags), np.log(vals), 1)[0]
    gamma = max(-slope, 0.0)
    for k in range(s_max + 1, max_abs_lag + 1):
        scaled = c[s_max] * (k / s_max) ** (-gamma)
        out[k + max_abs_lag] = scaled
        out[-k + max_abs_lag] = scaled.T
    return out


def model_response(
    kernel: Kernel,
    c: dict[int, np.ndarray],
    tau_max: int,
    tau_min: int = 0,
    tail: str = "zero",
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Response curve implied by a kernel and sign correlations.

    Returns ``(R, r)`` dicts on ``tau_min..tau_max`` with ``R_0 = 0``.  For
    uncorrelated signs the integrated response equals the integrated kernel
    exactly.
    """
    g = kernel.differential()
    lags = kernel.support
    n = kernel.n_assets
    lo = min(tau_min, 0)
    span = max(abs(lo - lags), abs(tau_max - 1))
    dense = _correlation_array(c, span, tail)

    r: dict[int, np.ndarray] = {}
    for u in range(lo, tau_max + 1):
        acc = np.zeros((n, n))
        for s in range(1, lags + 1):
            acc += g[s - 1] @ dense[u - s + span]
        r[u] = acc

    big_r: dict[int, np.ndarray] = {0: np.zeros((n, n))}
    acc = np.zeros((n, n))
    for u in range(1, tau_max + 1):
        acc = acc + r[u]
        big_r[u] = acc.copy()
    acc = np.zeros((n, n))
    for tau in range(-1, lo - 1, -1):
        acc = acc - r[tau + 1]
        big_r[tau] = acc.copy()
    big_r = {k: v for k, v in sorted(big_r.items()) if tau_min <= k <= tau_max}
    r = {k: v for k, v in sorted(r.items()) if tau_min <= k <= tau_max}
    return big_r, r


def model_covariance(
    kernel: Kernel,
    c: dict[int, np.ndarray],
    tau: int,
    sigma_w: np.ndarray | None = None,
    tail: str = "zero",
) -> tuple[np.ndarray, np.ndarray]:
    """Impact and noise parts of the model covariance of tau-bin returns.

    The cumulative return over a window loads past sign shocks with weight
    ``h_m = G_{min(m, L)} - G_{max(0, m - tau)}`` at distance ``m`` from the
    window end, so the impact part is the double sum of ``h c h^T`` over
    distances; the noise part is ``tau * sigma_w`` (zero when not supplied).
    """
    big_g = kernel.integrated()
    lags = kernel.support
    n = kernel.n_assets
    m_max = tau + lags - 1
    dense = _correlation_array(c, m_max, tail)

    zero = np.zeros((n, n))
    h = np.stack([
        big_g[min(m, lags) - 1] - (big_g[m - tau - 1] if m - tau >= 1 else zero)
        for m in range(1, m_max + 1)
    ])
    # sum_{m,m'} h_m c_{m'-m} h_{m'}^T, batched over the lag offset k = m' - m
    impact = np.zeros((n, n))
    for k in range(-(m_max - 1), m_max):
        lo = max(1, 1 - k)
        hi = min(m_max, m_max - k)
        if lo > hi:
            continue
        u = h[lo - 1: hi]
        v = h[lo - 1 + k: hi + k]
        impact += np.einsum("mij,jl,mkl->ik", u, dense[k + m_max], v, optimize=True)
    noise = tau * sigma_w if sigma_w is not None else np.zeros((n, n))
    return impact, noise


@dataclass
class CovDecomposition:
    """Covariance of tau-bin returns split into impact and noise parts."""

    tau: int
    impact: np.ndarray
    noise: np.ndarray
    empirical: np.ndarray | None = None

    @property
    def total(self) -> np.ndarray:
        return self.impact + self.noise

    @property
    def explained_diag(self) -> float:
        """Share of the mean return variance carried by the impact part."""
        if self.empirical is None:
            return float("nan")
        return diag_mean(self.impact) / diag_mean(self.empirical)

    @property
    def explained_off(self) -> float:
        """Share of the mean return covariance carried by the impact part."""
        if self.empirical is None:
            return float("nan")
        return off_mean(self.impact) / off_mean(self.empirical)


def decompose(
    kernel: Kernel,
    stats: LagStats,
    taus: list[int] | None = None,
    sigma_w: np.ndarray | None = None,
    tail: str = "zero",
) -> dict[int, CovDecomposition]:
    """Decompose the measured return covariance at each horizon.

    ``sigma_w`` defaults to the kernel's own fit-time estimate, else to the
    value that makes the identity exact at the single-bin horizon, so longer
    horizons are the informative check.
    """
    if taus is None:
        taus = sorted(stats.sigma)
    if sigma_w is None:
        sigma_w = kernel.sigma_w
    if sigma_w is None:
        impact_1, _ = model_covariance(kernel, stats.c, 1, None, tail)
        sigma_w = stats.sigma_0 - impact_1
    out = {}
    for tau in taus:
        impact, noise = model_covariance(kernel, stats.c, tau, sigma_w, tail)
        out[tau] = CovDecomposition(
            tau=tau, impact=impact, noise=noise, empirical=stats.sigma.get(tau)
        )
    return out


@dataclass
class ChannelSplit:
    """Class means of the response at one horizon, split by impact channel.

    Self response (own signs -> own returns) splits into the direct kernel
    channel and mediation by cross-impact from correlated assets; cross
    response splits into the impactor's own-price channel, the direct
    cross-kernel channel, and third-asset mediation.  Each triple sums to the
    corresponding class mean of the model response exactly.
    """

    tau: int
    self_direct: float
    self_mediated: float
    cross_self: float
    cross_direct: float
    cross_mediated: float

    @property
    def self_total(self) -> float:
        return self.self_direct + self.self_mediated

    @property
    def cross_total(self) -> float:
        return self.cross_self + self.cross_direct + self.cross_mediated


def split_channels(
    kernel: Kernel,
    c: dict[int, np.ndarray],
    tau: int,
    tail: str = "zero",
) -> ChannelSplit:
    """Split the model response at horizon tau by impacting asset.

    ``contrib[i, j, k]`` is the part of the model response of asset ``i`` to
    the signs of asset ``j`` that flows through the kernel column of asset
    ``k``; grouping ``k`` relative to ``(i, j)`` yields the channels.
    """
    g = kernel.differential()
    lags = kernel.support
    n = kernel.n_assets
    span = max(abs(1 - lags), abs(tau - 1))
    dense = _correlation_array(c, span, tail)

    # window[s] = sum_{u=1..tau} c_{u-s}
    window = np.stack([
        dense[1 - s + span: tau - s + span + 1].sum(axis=0)
        for s in range(1, lags + 1)
    ])
    contrib = np.einsum("sik,skj->ijk", g, window)

    diag_idx = np.arange(n)
    self_direct = float(contrib[diag_idx, diag_idx, diag_idx].mean())
    self_all = contrib[diag_idx, diag_idx, :].sum(axis=1)
    self_mediated = float((self_all - contrib[diag_idx, diag_idx, diag_idx]).mean())

    if n < 2:
        return ChannelSplit(tau, self_direct, self_mediated,
                            float("nan"), float("nan"), float("nan"))
    off = ~np.eye(n, dtype=bool)
    i_idx, j_idx = np.nonzero(off)
    via_i = contrib[i_idx, j_idx, i_idx]
    via_j = contrib[i_idx, j_idx, j_idx]
    total = contrib[i_idx, j_idx, :].sum(axis=1)
    return ChannelSplit(
        tau=tau,
        self_direct=self_direct,
        self_mediated=self_mediated,
        cross_self=float(via_i.mean()),
        cross_direct=float(via_j.mean()),
        cross_mediated=float((total - via_i - via_j).mean()),
    )


def decomposition_table(decomps: dict[int, CovDecomposition]) -> pd.DataFrame:
    """Per-horizon class means of the decomposition, long on horizon."""
    rows = []
    for tau in sorted(decomps):
        d = decomps[tau]
        rows.append({
            "tau": tau,
            "impact_diag": diag_mean(d.impact),
            "impact_off": off_mean(d.impact),
            "noise_diag": diag_mean(d.noise),
            "noise_off": off_mean(d.noise),
            "model_diag": diag_mean(d.total),
            "model_off": off_mean(d.total),
            "empirical_diag": diag_mean(d.empirical) if d.empirical is not None else float("nan"),
            "empirical_off": off_mean(d.empirical) if d.empirical is not None else float("nan"),
            "explained_diag": d.explained_diag,
            "explained_off": d.explained_off,
        })
    return pd.DataFrame(rows)


def channel_table(splits: dict[int, ChannelSplit]) -> pd.DataFrame:
    """Per-horizon channel means of the response split, long on horizon."""
    rows = []
    for tau in sorted(splits):
        s = splits[tau]
        rows.append({
            "tau": tau,
            "self_direct": s.self_direct,
            "self_mediated": s.self_mediated,
            "self_total": s.self_total,
            "cross_self": s.cross_self,
            "cross_direct": s.cross_direct,
            "cross_mediated": s.cross_mediated,
            "cross_total": s.cross_total,
        })
    return pd.DataFrame(rows)
