"""Spectral analysis of covariance matrices and kernels.

Eigen- and singular decompositions with deterministic sign conventions,
sector composition of modes, the Marchenko-Pastur pure-noise band for sample
covariance eigenvalues, and a cropped-overlap measure of how many modes two
bases share, together with its Monte Carlo noise floor.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from .errors import DimensionMismatch, NotSymmetric

__all__ = [
    "eig_sym",
    "svd_modes",
    "sector_mode_weights",
    "marchenko_pastur_edges",
    "marchenko_pastur_density",
    "band_fraction",
    "overlap",
    "common_modes_fraction",
    "noise_baseline",
    "haar_basis",
]


def _fix_column_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude loading of each is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    flips = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    flips = np.where(flips == 0, 1.0, flips)
    return vecs * flips


def eig_sym(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and sign-fixed eigenvectors of a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=float)
    scale = max(float(np.abs(matrix).max()), 1.0)
    if not np.allclose(matrix, matrix.T, atol=1e-10 * scale):
        raise NotSymmetric("eigendecomposition requires a symmetric matrix")
    vals, vecs = np.linalg.eigh(matrix)
    order = np.argsort(vals)[::-1]
    return vals[order], _fix_column_signs(vecs[:, order])


def svd_modes(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with jointly sign-fixed factors: u columns flipped, v rows follow."""
    u, s, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    idx = np.argmax(np.abs(u), axis=0)
    flips = np.sign(u[idx, np.arange(u.shape[1])])
    flips = np.where(flips == 0, 1.0, flips)
    u = u * flips
    vt = vt * flips[: vt.shape[0], None]
    return u, s, vt


def sector_mode_weights(
    vecs: np.ndarray, sectors: list[str], n_modes: int | None = None
) -> pd.DataFrame:
    """Per-sector squared-loading shares of the leading modes.

    Each row is one mode; columns are sectors plus a participation-ratio
    column (inverse sum of fourth powers, the effective number of assets).
    """
    sectors = list(sectors)
    if len(sectors) != vecs.shape[0]:
        raise DimensionMismatch(
            f"{len(sectors)} sector labels for {vecs.shape[0]} loadings"
        )
    n_modes = vecs.shape[1] if n_modes is None else min(n_modes, vecs.shape[1])
    labels = sorted(set(sectors))
    lab = np.asarray(sectors)
    rows = []
    for k in range(n_modes):
        v = vecs[:, k]
        row = {"mode": k}
        for s in labels:
            row[s] = float((v[lab == s] ** 2).sum())
        row["participation"] = float(1.0 / (v ** 4).sum())
        rows.append(row)
    return pd.DataFrame(rows)


def marchenko_pastur_edges(q: float, variance: float = 1.0) -> tuple[float, float]:
    """Support of the pure-noise eigenvalue density at aspect ratio q = N/T."""
    if q <= 0:
        raise DimensionMismatch(f"aspect ratio must be positive, got {q}")
    lo = variance * (1.0 - np.sqrt(q)) ** 2
    hi = variance * (1.0 + np.sqrt(q)) ** 2
    return float(lo), float(hi)


def marchenko_pastur_density(
    x: np.ndarray, q: float, variance: float = 1.0
) -> np.ndarray:
    """Pure-noise eigenvalue density evaluated at x (zero off the band)."""
    x = np.asarray(x, dtype=float)
    lo, hi = marchenko_pastur_edges(q, variance)
    out = np.zeros_like(x)
    on = (x > lo) & (x < hi)
    out[on] = np.sqrt((hi - x[on]) * (x[on] - lo)) / (2.0 * np.pi * variance * q * x[on])
    return out


def band_fraction(
    eigvals: np.ndarray, q: float, variance: float = 1.0, slack: float = 0.0
) -> float:
    """Fraction of eigenvalues inside the noise band, edges widened by slack."""
    lo, hi = marchenko_pastur_edges(q, variance)
    lo, hi = lo * (1.0 - slack), hi * (1.0 + slack)
    eigvals = np.asarray(eigvals, dtype=float)
    return float(((eigvals >= lo) & (eigvals <= hi)).mean())


def overlap(basis_a: np.ndarray, basis_b: np.ndarray) -> np.ndarray:
    """Mode-by-mode scalar products of two orthonormal column bases."""
    if basis_a.shape[0] != basis_b.shape[0]:
        raise DimensionMismatch(
            f"bases live in different spaces: {basis_a.shape[0]} vs {basis_b.shape[0]}"
        )
    return basis_a.T @ basis_b


def common_modes_fraction(
    basis_a: np.ndarray, basis_b: np.ndarray, n_modes: int
) -> float:
    """Geometric-mean singular value of the top-mode overlap block.

    Crops the overlap of the two bases to their leading ``n_modes`` columns;
    the geometric mean of its singular values is 1 exactly when the two
    subspaces coincide mode by mode and decays toward the random-basis floor
    (see :func:`noise_baseline`) as they decouple.
    """
    if n_modes < 1 or n_modes > min(basis_a.shape[1], basis_b.shape[1]):
        raise DimensionMismatch(f"cannot crop {n_modes} modes from the given bases")
    a_crop, b_crop = basis_a[:, :n_modes], basis_b[:, :n_modes]
    if np.array_equal(a_crop, b_crop):
        # orthonormal bases that coincide share every mode by definition;
        # skip the decomposition so rounding cannot pull the answer off 1
        return 1.0
    block = overlap(a_crop, b_crop)
    svals = np.linalg.svd(block, compute_uv=False)
    svals = np.maximum(svals, 1e-300)
    return float(np.exp(np.mean(np.log(svals))))


def haar_basis(n_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with positive R diagonal)."""
    z = rng.standard_normal((n_dim, n_dim))
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r))
    return q * np.where(d == 0, 1.0, d)


def noise_baseline(
    n_modes: int, n_dim: int, n_draws: int = 200, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo common-modes floor for unrelated bases; (mean, sd of mean).

    Each draw uses its own spawned substream, so results for a given seed are
    independent of ``n_draws`` prefix length and fully reproducible.
    """
    children = np.random.SeedSequence(seed).spawn(n_draws)
    vals = np.empty(n_draws)
    eye = np.eye(n_dim, n_modes)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        q = haar_basis(n_dim, rng)
        # invariance: overlap of two Haar bases is itself Haar
        vals[i] = common_modes_fraction(q, eye, n_modes)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_draws))
