"""Propagator kernels and their estimators.

A kernel is the lagged linear map from past sign imbalances to returns:

    x_t = sum_{s=1}^{L} g_s eps_{t-s} + w_t

with ``g_s`` an (N, N) matrix per lag (rows = impacted asset, columns =
impacting asset) and ``w_t`` noise that is white across bins.  The integrated
kernel ``G_tau = sum_{s<=tau} g_s`` starts at ``G_0 = 0``.

Three nested families are fit by least squares on lagged moments:

* ``full``        -- one free matrix per lag (nonparametric),
* ``factorized``  -- ``G_tau = G * phi_tau`` with a shared decay profile,
* ``homogeneous`` -- factorized with ``G`` exchangeable (two scalars).

All fits consume a :class:`~ximpact.lagstats.LagStats` bundle, never raw
panels, so refitting sub-universes or alternative lag ranges is cheap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    DegenerateMeans,
    DimensionMismatch,
    InsufficientData,
    NonPositiveProfile,
    SingularB,
    SingularSystem,
)
from .lagstats import LagStats, diag_mean, off_mean
from .panel import Panel

__all__ = [
    "DecayShape",
    "Kernel",
    "fit_nonparametric",
    "fit_decay",
    "fit_factorized",
    "fit_homogeneous",
    "residuals",
    "neg_loglik",
    "score",
    "integrate_kernel",
    "differentiate_kernel",
    "duplicate_asset",
    "full_family_size",
]

log = logging.getLogger(__name__)


def full_family_size(n_assets: int, lags: int) -> int:
    """Free parameters of the nonparametric model: one matrix per lag plus noise."""
    return n_assets * n_assets * (lags + 1)


def integrate_kernel(g: np.ndarray) -> np.ndarray:
    """Cumulate a differential kernel: out[tau-1] = G_tau = sum_{s<=tau} g_s."""
    return np.cumsum(g, axis=0)


def differentiate_kernel(big_g: np.ndarray) -> np.ndarray:
    """Invert :func:`integrate_kernel`; G_0 = 0 is implicit, so g_1 = G_1."""
    return np.diff(big_g, axis=0, prepend=np.zeros_like(big_g[:1]))


@dataclass(frozen=True)
class DecayShape:
    """Power-law decay profile phi_tau = (1 + tau/tau0)^(-beta) for tau >= 1."""

    beta: float
    tau0: float

    def __post_init__(self) -> None:
        if not (self.tau0 > 0):
            raise NonPositiveProfile(f"tau0 must be positive, got {self.tau0}")
        if self.beta < 0:
            raise NonPositiveProfile(f"beta must be nonnegative, got {self.beta}")

    def phi(self, length: int) -> np.ndarray:
        """Integrated profile at lags 1..length."""
        tau = np.arange(1, length + 1, dtype=float)
        return (1.0 + tau / self.tau0) ** (-self.beta)

    def weights(self, length: int) -> np.ndarray:
        """Differential profile psi_tau = phi_tau - phi_{tau-1}, with phi_0 = 0.

        The zero origin encodes G_0 = 0, so psi_1 = phi_1 carries the full
        first-lag amplitude and later weights are the (negative) increments.
        """
        phi = self.phi(length)
        return np.diff(phi, prepend=0.0)


@dataclass
class Kernel:
    """A fitted or constructed propagator kernel.

    ``g`` holds the differential kernel at lags 1..L (axis 0).  Structured
    families carry their parameters too: ``g_matrix`` and ``shape`` for the
    factorized family, ``g_diag``/``g_off`` additionally for the homogeneous
    one (where ``g_matrix`` is the exchangeable matrix they generate).
    ``sigma_w`` optionally stores a fit-time noise covariance estimate.
    """

    kind: str
    g: np.ndarray
    shape: DecayShape | None = None
    g_matrix: np.ndarray | None = None
    g_diag: float | None = None
    g_off: float | None = None
    sigma_w: np.ndarray | None = None
    ridge: float | None = None
    assets: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.g = np.asarray(self.g, dtype=float)
        if self.g.ndim != 3 or self.g.shape[1] != self.g.shape[2]:
            raise DimensionMismatch(f"kernel array must be (L, N, N), got {self.g.shape}")

    @property
    def n_assets(self) -> int:
        return self.g.shape[1]

    @property
    def support(self) -> int:
        return self.g.shape[0]

    def differential(self, length: int | None = None) -> np.ndarray:
        """Differential kernel g_1..g_length.

        Shaped kernels extend analytically past the stored support; the
        nonparametric kind is zero there by construction.
        """
        length = self.support if length is None else int(length)
        if self.shape is not None and self.g_matrix is not None:
            return self.g_matrix[None, :, :] * self.shape.weights(length)[:, None, None]
        if length <= self.support:
            return self.g[:length]
        pad = np.zeros((length - self.support,) + self.g.shape[1:])
        return np.concatenate([self.g, pad], axis=0)

    def integrated(self, length: int | None = None) -> np.ndarray:
        """Integrated kernel G_1..G_length (G_0 = 0 is not stored)."""
        return integrate_kernel(self.differential(length))

    def to_full(self, length: int | None = None) -> "Kernel":
        """Materialize as a nonparametric kernel (drops structural parameters)."""
        return Kernel(kind="full", g=self.differential(length), assets=list(self.assets))

    def amplitude(self) -> np.ndarray:
        """Prefactor matrix of a shaped kernel, or the total integrated kernel."""
        if self.g_matrix is not None:
            return self.g_matrix
        return self.g.sum(axis=0)

    @classmethod
    def factorized(
        cls,
        g_matrix: np.ndarray,
        shape: DecayShape,
        support: int,
        assets: list[str] | None = None,
    ) -> "Kernel":
        g_matrix = np.asarray(g_matrix, dtype=float)
        g = g_matrix[None, :, :] * shape.weights(support)[:, None, None]
        return cls(kind="factorized", g=g, shape=shape, g_matrix=g_matrix,
                   assets=list(assets or []))

    @classmethod
    def homogeneous(
        cls,
        g_diag: float,
        g_off: float,
        n_assets: int,
        shape: DecayShape,
        support: int,
        assets: list[str] | None = None,
    ) -> "Kernel":
        g_matrix = g_off * np.ones((n_assets, n_assets))
        np.fill_diagonal(g_matrix, g_diag)
        base = cls.factorized(g_matrix, shape, support, assets)
        return replace(base, kind="homogeneous", g_diag=float(g_diag), g_off=float(g_off))


def _lag_range(stats: LagStats, t_lag: int | None) -> int:
    lags = stats.tau_max if t_lag is None else int(t_lag)
    if lags < 1:
        raise DimensionMismatch("kernel support must be at least one lag")
    if stats.tau_max < lags:
        raise InsufficientData(
            f"responses available to lag {stats.tau_max}, need {lags}"
        )
    if stats.t_lag < lags - 1:
        raise InsufficientData(
            f"sign correlations available to lag {stats.t_lag}, need {lags - 1}"
        )
    return lags


def fit_nonparametric(stats: LagStats, t_lag: int | None = None, ridge: float = 1e-4) -> Kernel:
    """Least-squares fit of one kernel matrix per lag.

    Solves the stacked normal equations ``(A + ridge*I) U = B`` where ``A`` is
    the block-Toeplitz Gram of lagged sign correlations (block (s, s') equals
    ``c_{s'-s}``), ``B`` stacks transposed differential responses, and block
    row ``s`` of ``U`` is ``g_s`` transposed.  The biased 1/T normalization in
    the inputs keeps ``A`` positive semidefinite, so a small ridge is enough
    to stabilize the solve; pass ``ridge=0`` for the exactly determined case.
    """
    lags = _lag_range(stats, t_lag)
    n = stats.n_assets
    gram = np.block([
        [stats.c[sp - s] for sp in range(1, lags + 1)]
        for s in range(1, lags + 1)
    ])
    rhs = np.vstack([stats.r[s].T for s in range(1, lags + 1)])
    if ridge:
        gram = gram + ridge * np.eye(lags * n)
    try:
        solution = scipy.linalg.solve(gram, rhs, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(
            f"lag-correlation system of size {lags * n} is singular; "
            "increase ridge or reduce the lag range"
        ) from exc
    g = np.stack([solution[s * n:(s + 1) * n].T for s in range(lags)])
    return Kernel(kind="full", g=g, ridge=ridge, assets=list(stats.assets))


def _factor_moments(stats: LagStats, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cross moments of returns/signs with the profile-weighted sign history.

    With ``y_t = sum_s psi_s eps_{t-s}``: ``A = E[x y^T]`` and ``B = E[y y^T]``,
    assembled from the stored lag statistics.
    """
    lags = len(weights)
    r_stack = np.stack([stats.r[s] for s in range(1, lags + 1)])
    a = np.einsum("s,sij->ij", weights, r_stack)
    coefs = np.correlate(weights, weights, mode="full")
    c_stack = np.stack([stats.c[k] for k in range(-(lags - 1), lags)])
    b = np.einsum("k,kij->ij", coefs, c_stack)
    return a, b


_DECAY_STARTS = [(0.1, 0.3), (0.3, 0.3), (0.6, 0.3), (0.15, 1.0), (0.3, 3.0), (0.5, 10.0)]
_BETA_BOUNDS = (1e-4, 3.0)
_TAU0_BOUNDS = (1e-3, 1e3)


def fit_decay(stats: LagStats, t_lag: int | None = None) -> DecayShape:
    """Estimate the shared decay profile by profile likelihood.

    For each candidate (beta, tau0), the best prefactor matrix has residual
    covariance ``sigma_0 - A B^{-1} A^T``; its log-determinant is the Gaussian
    concentrated objective, minimized by Nelder-Mead from several starts.
    """
    lags = _lag_range(stats, t_lag)
    r_stack = np.stack([stats.r[s] for s in range(1, lags + 1)])
    c_stack = np.stack([stats.c[k] for k in range(-(lags - 1), lags)])
    sigma_0 = stats.sigma_0

    def objective(params: np.ndarray) -> float:
        beta, log_tau0 = params
        tau0 = float(np.exp(log_tau0))
        if not (_BETA_BOUNDS[0] <= beta <= _BETA_BOUNDS[1]) or not (
            _TAU0_BOUNDS[0] <= tau0 <= _TAU0_BOUNDS[1]
        ):
            return np.inf
        psi = DecayShape(beta, tau0).weights(lags)
        a = np.einsum("s,sij->ij", psi, r_stack)
        coefs = np.correlate(psi, psi, mode="full")
        b = np.einsum("k,kij->ij", coefs, c_stack)
        try:
            resid = sigma_0 - a @ np.linalg.solve(b, a.T)
        except np.linalg.LinAlgError:
            return np.inf
        sign, logdet = np.linalg.slogdet(resid)
        return logdet if sign > 0 else np.inf

    best = None
    for beta0, tau00 in _DECAY_STARTS:
        res = scipy.optimize.minimize(
            objective,
            x0=np.array([beta0, np.log(tau00)]),
            method="Nelder-Mead",
            options={"xatol": 1e-5, "fatol": 1e-10, "maxiter": 400},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NonPositiveProfile("no decay profile yields a positive residual covariance")
    beta, tau0 = float(best.x[0]), float(np.exp(best.x[1]))
    log.debug("fit_decay: beta=%.4f tau0=%.4f objective=%.6f", beta, tau0, best.fun)
    return DecayShape(beta=beta, tau0=tau0)


def _resolve_weights(
    stats: LagStats,
    shape: DecayShape | None,
    weights: np.ndarray | None,
    t_lag: int | None,
) -> tuple[np.ndarray, DecayShape | None, int]:
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        lags = _lag_range(stats, len(weights))
        return weights, shape, lags
    if shape is None:
        shape = fit_decay(stats, t_lag)
    lags = _lag_range(stats, t_lag)
    return shape.weights(lags), shape, lags


def fit_factorized(
    stats: LagStats,
    shape: DecayShape | None = None,
    weights: np.ndarray | None = None,
    t_lag: int | None = None,
) -> Kernel:
    """Fit the prefactor matrix of a profile-factorized kernel.

    With the profile fixed, the least-squares prefactor is ``G = A B^{-1}``
    from the moments of :func:`_factor_moments`.  When ``shape`` is omitted it
    is estimated first via :func:`fit_decay`; passing explicit ``weights``
    instead fits an arbitrary differential profile (e.g. ``[1.0]`` regresses
    returns on the previous sign alone).
    """
    psi, shape, lags = _resolve_weights(stats, shape, weights, t_lag)
    a, b = _factor_moments(stats, psi)
    try:
        g_matrix = np.linalg.solve(b.T, a.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularB("profile-weighted sign covariance is singular") from exc
    if shape is not None:
        kernel = Kernel.factorized(g_matrix, shape, lags, assets=list(stats.assets))
    else:
        g = g_matrix[None, :, :] * psi[:, None, None]
        kernel = Kernel(kind="factorized", g=g, g_matrix=g_matrix, assets=list(stats.assets))
    kernel.sigma_w = stats.sigma_0 - a @ np.linalg.solve(b, a.T)
    return kernel


def fit_homogeneous(
    stats: LagStats,
    shape: DecayShape | None = None,
    weights: np.ndarray | None = None,
    t_lag: int | None = None,
) -> Kernel:
    """Fit the two-parameter exchangeable kernel (common self- and cross-impact).

    Closed form: with ``m`` the all-entry mean and ``i`` the diagonal mean of
    the :func:`_factor_moments` matrices, the least-squares solution in the
    exchangeable family and the implied exchangeable noise covariance follow
    from the market/idiosyncratic eigenmodes of the moment matrices.
    """
    psi, shape, lags = _resolve_weights(stats, shape, weights, t_lag)
    a, b = _factor_moments(stats, psi)
    n = stats.n_assets
    a_m, a_i = float(a.mean()), diag_mean(a)
    b_m, b_i = float(b.mean()), diag_mean(b)
    if abs(b_m) < 1e-14 or (n > 1 and abs(b_m - b_i) < 1e-14):
        raise DegenerateMeans("moment matrices have no market/idio contrast to fit")
    if n == 1:
        g_diag, g_off = a_m / b_m, 0.0
    else:
        market = a_m / b_m
        idio = (a_m - a_i) / (b_m - b_i)
        g_diag = (market + (n - 1) * idio) / n
        g_off = (market - idio) / n

    sigma_mean = float(stats.sigma_0.mean())
    var_market = n * (sigma_mean - a_m ** 2 / b_m)
    if n > 1:
        var_idio = (n / (n - 1)) * (1.0 - sigma_mean + (a_m - a_i) ** 2 / (b_m - b_i))
        w_diag = (var_market + (n - 1) * var_idio) / n
        w_off = (var_market - var_idio) / n
    else:
        w_diag, w_off = var_market, 0.0
    sigma_w = w_off * np.ones((n, n))
    np.fill_diagonal(sigma_w, w_diag)

    if shape is None:
        g_matrix = g_off * np.ones((n, n))
        np.fill_diagonal(g_matrix, g_diag)
        g = g_matrix[None, :, :] * psi[:, None, None]
        kernel = Kernel(kind="homogeneous", g=g, g_matrix=g_matrix,
                        g_diag=float(g_diag), g_off=float(g_off),
                        assets=list(stats.assets))
    else:
        kernel = Kernel.homogeneous(g_diag, g_off, n, shape, lags, assets=list(stats.assets))
    kernel.sigma_w = sigma_w
    return kernel


def residuals(panel: Panel, kernel: Kernel) -> tuple[np.ndarray, np.ndarray]:
    """Noise series w_t = x_t - sum_s g_s eps_{t-s} on fully covered rows.

    A row is kept only when its whole lag window lies inside one session, so
    each session loses its first ``support`` rows as warm-up.  Returns the
    residual matrix and the integer row indices it corresponds to.
    """
    g = kernel.differential()
    lags = kernel.support
    x, eps, sid = panel.returns, panel.signs, panel.session_id
    if x.shape[1] != kernel.n_assets:
        raise DimensionMismatch(
            f"panel has {x.shape[1]} assets but kernel expects {kernel.n_assets}"
        )
    impact = np.zeros_like(x)
    for s in range(1, lags + 1):
        impact[s:] += eps[:-s] @ g[s - 1].T
    t = np.arange(lags, x.shape[0])
    rows = t[sid[t] == sid[t - lags]]
    if len(rows) == 0:
        raise InsufficientData("no row has a full in-session lag window")
    return x[rows] - impact[rows], rows


def neg_loglik(w: np.ndarray, sigma: np.ndarray | None = None) -> float:
    """Gaussian negative log-likelihood of residuals, per bin and asset.

    ``sigma=None`` plugs in the sample covariance, giving the concentrated
    value ``(ln det sigma_hat + N) / (2N)`` (additive constants dropped).
    """
    t_rows, n = w.shape
    sample = (w.T @ w) / t_rows
    if sigma is None:
        sign, logdet = np.linalg.slogdet(sample)
        if sign <= 0:
            raise SingularSystem("residual covariance is not positive definite")
        return 0.5 * (logdet / n + 1.0)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise SingularSystem("supplied covariance is not positive definite")
    quad = float(np.trace(np.linalg.solve(sigma, sample)))
    return 0.5 * (logdet + quad) / n


def score(panel: Panel, kernel: Kernel) -> dict[str, float]:
    """Residual-variance scores of a kernel on a panel (lower is better).

    * ``r_diag``: mean residual variance over mean return variance,
    * ``r_off`` : summed absolute residual covariance over the same for
      returns, off-diagonal entries only (nan for one asset),
    * ``r_lnl`` : concentrated negative log-likelihood per bin and asset,
      which equals 0.5 * (1 + ln det sigma_w / N) for unit-variance returns.

    A zero kernel scores r_diag = r_off = 1 exactly; every ratio uses the
    return covariance over the same warm-up-trimmed rows as the residuals.
    """
    w, rows = residuals(panel, kernel)
    x = panel.returns[rows]
    sigma_w = (w.T @ w) / len(w)
    sigma_x = (x.T @ x) / len(x)

    def off_abs(m: np.ndarray) -> float:
        return float(np.abs(m).sum() - np.abs(np.diag(m)).sum())

    n = kernel.n_assets
    out = {
        "r_diag": diag_mean(sigma_w) / diag_mean(sigma_x),
        "r_off": off_abs(sigma_w) / off_abs(sigma_x) if n > 1 else float("nan"),
        "r_lnl": neg_loglik(w),
        "n_rows": float(len(w)),
    }
    return out


def duplicate_asset(kernel: Kernel, index: int) -> Kernel:
    """Split one asset into two indistinguishable halves of the kernel.

    The new asset is appended last and copies every row and column of the
    original at each lag, including the mutual and self blocks.  Splitting the
    corresponding sign series additively then leaves all model predictions
    unchanged, which is the self-consistency this construction exists to test.
    """
    n = kernel.n_assets
    if not 0 <= index < n:
        raise DimensionMismatch(f"asset index {index} out of range for {n} assets")
    idx = np.concatenate([np.arange(n), [index]])
    g = kernel.differential()[:, idx[:, None], idx[None, :]]
    assets = list(kernel.assets) if kernel.assets else [f"A{i}" for i in range(n)]
    assets = assets + [assets[index] + "_dup"]
    return Kernel(kind="full", g=g, assets=assets)
