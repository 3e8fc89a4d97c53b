"""Plain-text artifact plumbing: deterministic CSV/JSON writers and manifests.

Every pipeline stage persists its outputs as CSV (tables, matrix stacks) and
JSON (parameters), plus a ``manifest.json`` recording the configuration hash,
seed, and input digests.  Apart from the manifest timestamp, all writers are
deterministic, so identical configurations produce byte-identical artifacts.
"""
from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .errors import MissingArtifact
from .kernels import DecayShape, Kernel
from .lagstats import LagStats, diag_mean, off_mean

__all__ = [
    "write_json",
    "read_json",
    "write_csv",
    "matrices_to_frame",
    "frame_to_matrices",
    "save_stats",
    "load_stats",
    "save_kernel",
    "load_kernel",
    "sha256_file",
    "config_hash",
    "write_manifest",
    "require",
    "artifact_files",
]

MANIFEST_NAME = "manifest.json"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(obj: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable,
                               allow_nan=True) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def matrices_to_frame(
    matrices: dict[int, np.ndarray], assets: list[str], lag_name: str = "lag"
) -> pd.DataFrame:
    """Flatten a lag-indexed family of (N, N) matrices to long format."""
    n = len(assets)
    rows_i, rows_j = np.divmod(np.arange(n * n), n)
    parts = []
    for lag in sorted(matrices):
        parts.append(pd.DataFrame({
            lag_name: lag,
            "row": np.asarray(assets)[rows_i],
            "col": np.asarray(assets)[rows_j],
            "value": matrices[lag].ravel(),
        }))
    return pd.concat(parts, ignore_index=True)


def frame_to_matrices(
    frame: pd.DataFrame, assets: list[str], lag_name: str = "lag"
) -> dict[int, np.ndarray]:
    """Inverse of :func:`matrices_to_frame` for a known asset order."""
    n = len(assets)
    index = {a: i for i, a in enumerate(assets)}
    out: dict[int, np.ndarray] = {}
    for lag, chunk in frame.groupby(lag_name, sort=True):
        m = np.empty((n, n))
        m[chunk["row"].map(index), chunk["col"].map(index)] = chunk["value"].to_numpy()
        out[int(lag)] = m
    return out


def save_stats(stats: LagStats, out_dir: str | Path) -> Path:
    """Persist a lag-statistics bundle as CSV matrix stacks plus metadata."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    assets = stats.assets or [f"A{i:03d}" for i in range(stats.n_assets)]
    nonneg_c = {s: m for s, m in stats.c.items() if s >= 0}
    write_csv(matrices_to_frame(stats.sigma, assets, "tau"), out_dir / "sigma.csv")
    write_csv(matrices_to_frame(stats.c_cum, assets, "tau"), out_dir / "c_cum.csv")
    write_csv(matrices_to_frame(nonneg_c, assets, "lag"), out_dir / "c.csv")
    write_csv(matrices_to_frame(stats.r, assets, "lag"), out_dir / "r.csv")
    write_csv(matrices_to_frame(stats.big_r, assets, "tau"), out_dir / "big_r.csv")
    write_json({
        "n_assets": stats.n_assets,
        "t_eff": stats.t_eff,
        "tau_max": stats.tau_max,
        "t_lag": stats.t_lag,
        "tau_min": stats.tau_min,
        "assets": assets,
        "sectors": stats.sectors,
    }, out_dir / "meta.json")
    return out_dir


def load_stats(stats_dir: str | Path) -> LagStats:
    """Rebuild a lag-statistics bundle written by :func:`save_stats`.

    Negative sign-correlation lags are reconstructed by transposition, which
    is exact by construction.  Batch-error fields are not persisted.
    """
    stats_dir = Path(stats_dir)
    meta_path = stats_dir / "meta.json"
    if not meta_path.exists():
        raise MissingArtifact(f"no statistics artifact at {stats_dir}")
    meta = read_json(meta_path)
    assets = list(meta["assets"])

    def load(name: str, lag_name: str) -> dict[int, np.ndarray]:
        return frame_to_matrices(pd.read_csv(stats_dir / name), assets, lag_name)

    c = load("c.csv", "lag")
    for s in [s for s in c if s > 0]:
        c[-s] = c[s].T
    return LagStats(
        n_assets=int(meta["n_assets"]),
        t_eff=int(meta["t_eff"]),
        tau_max=int(meta["tau_max"]),
        t_lag=int(meta["t_lag"]),
        tau_min=int(meta["tau_min"]),
        sigma=load("sigma.csv", "tau"),
        c_cum=load("c_cum.csv", "tau"),
        c=dict(sorted(c.items())),
        big_r=load("big_r.csv", "tau"),
        r=load("r.csv", "lag"),
        assets=assets,
        sectors=list(meta.get("sectors") or []),
    )


def save_kernel(kernel: Kernel, out_dir: str | Path) -> Path:
    """Persist a kernel: parameters in fit.json, differential stack in g.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    assets = kernel.assets or [f"A{i:03d}" for i in range(kernel.n_assets)]
    g = kernel.differential()
    write_csv(
        matrices_to_frame({s + 1: g[s] for s in range(kernel.support)}, assets),
        out_dir / "g.csv",
    )
    amplitude = kernel.amplitude()
    write_json({
        "kind": kernel.kind,
        "n_assets": kernel.n_assets,
        "support": kernel.support,
        "ridge": kernel.ridge,
        "beta": None if kernel.shape is None else kernel.shape.beta,
        "tau0": None if kernel.shape is None else kernel.shape.tau0,
        "g_diag": kernel.g_diag,
        "g_off": kernel.g_off,
        "g_matrix": None if kernel.g_matrix is None else kernel.g_matrix,
        "sigma_w": None if kernel.sigma_w is None else kernel.sigma_w,
        "amplitude_diag_mean": diag_mean(amplitude),
        "amplitude_off_mean": off_mean(amplitude),
        "assets": assets,
    }, out_dir / "fit.json")
    return out_dir


def load_kernel(fit_dir: str | Path) -> Kernel:
    """Rebuild a kernel written by :func:`save_kernel`."""
    fit_dir = Path(fit_dir)
    meta_path = fit_dir / "fit.json"
    if not meta_path.exists():
        raise MissingArtifact(f"no fit artifact at {fit_dir}")
    meta = read_json(meta_path)
    assets = list(meta["assets"])
    matrices = frame_to_matrices(pd.read_csv(fit_dir / "g.csv"), assets)
    g = np.stack([matrices[s] for s in range(1, meta["support"] + 1)])
    shape = None
    if meta.get("beta") is not None:
        shape = DecayShape(beta=meta["beta"], tau0=meta["tau0"])
    return Kernel(
        kind=meta["kind"],
        g=g,
        shape=shape,
        g_matrix=None if meta.get("g_matrix") is None else np.asarray(meta["g_matrix"]),
        g_diag=meta.get("g_diag"),
        g_off=meta.get("g_off"),
        sigma_w=None if meta.get("sigma_w") is None else np.asarray(meta["sigma_w"]),
        ridge=meta.get("ridge"),
        assets=assets,
    )


def artifact_files(directory: str | Path) -> dict[str, Path]:
    """Data files of an artifact directory, manifest excluded, for digesting."""
    directory = Path(directory)
    out = {}
    for path in sorted(directory.glob("*")):
        if path.is_file() and path.name != MANIFEST_NAME:
            out[path.name] = path
    return out


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(
    out_dir: str | Path,
    subcommand: str,
    config: dict,
    inputs: dict[str, str | Path] | None = None,
    seed: int | None = None,
) -> Path:
    """Record what produced this artifact directory.

    The manifest carries the only timestamp in the pipeline; everything else
    is a pure function of configuration and inputs.
    """
    inputs = inputs or {}
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "config_sha256": config_hash(config),
        "seed": seed,
        "inputs": {str(k): sha256_file(v) for k, v in sorted(inputs.items())},
        "written_at": datetime.now(timezone.utc).isoformat(),
    }
    return write_json(manifest, Path(out_dir) / MANIFEST_NAME)


def require(path: str | Path, what: str) -> Path:
    """Assert an upstream artifact exists before depending on it."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"{what} not found at {path}; run the producing step first")
    return path
