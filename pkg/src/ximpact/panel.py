"""Binned market panel: ingestion, session filtering, series construction.

Pipeline (all steps exposed individually, orchestrated by :func:`load_panel`):

1. parse a bin-level CSV (time, asset, price, n_buy, n_sell) and a sector map,
2. drop bins near the session open/close where microstructure is distorted,
3. align assets on the intersection of their timestamps,
4. build log-returns and signed order-flow imbalances per session,
5. normalize both panels globally to zero mean and unit variance.

Returns are indexed by the end time of the bin they close; the first bin of
every session is consumed by the differencing.  Time is handled in bin units
throughout the rest of the package, so the resulting panel is dimensionless.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    EmptyIntersection,
    MissingSector,
    NonPositivePrice,
    ParseError,
    ZeroVariance,
)

__all__ = [
    "RawBinRecord",
    "Panel",
    "load_panel",
    "session_filter",
    "build_series",
    "normalize_global",
    "panel_from_arrays",
    "DEFAULT_SCHEMA",
]

DEFAULT_SCHEMA = {
    "time": "time",
    "asset": "asset",
    "price": "price",
    "n_buy": "n_buy",
    "n_sell": "n_sell",
}

_EPS = 1e-12


@dataclass(frozen=True)
class RawBinRecord:
    """One asset-bin observation: close price and buy/sell trade counts."""

    time: pd.Timestamp
    asset: str
    price: float
    n_buy: float
    n_sell: float

    @property
    def imbalance(self) -> float:
        return self.n_buy - self.n_sell


@dataclass
class Panel:
    """Aligned, normalized return and sign panels.

    ``returns[t, i]`` is the log-return of asset ``i`` over the bin ending at
    ``times[t]``; ``signs[t, i]`` the order-flow imbalance of the same bin.
    Both are globally standardized; ``norm_return`` / ``norm_sign`` hold the
    standard deviations divided out so raw units can be reinstated.
    ``session_id[t]`` labels the trading session a row belongs to; no return
    spans two sessions by construction.
    """

    assets: list[str]
    times: np.ndarray
    returns: np.ndarray
    signs: np.ndarray
    session_id: np.ndarray
    norm_return: np.ndarray
    norm_sign: np.ndarray
    sectors: dict[str, str] = field(default_factory=dict)
    dropped_rows: int = 0
    normalization: str = "global"

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @property
    def n_bins(self) -> int:
        return self.returns.shape[0]

    @property
    def n_sessions(self) -> int:
        return len(np.unique(self.session_id)) if len(self.session_id) else 0

    def sector_list(self) -> list[str]:
        """Sector label per column, in column order."""
        if not self.sectors:
            return []
        return [self.sectors[a] for a in self.assets]

    def subset(self, indices: Sequence[int]) -> "Panel":
        """Panel restricted to the given asset columns (hides the rest)."""
        idx = list(indices)
        assets = [self.assets[i] for i in idx]
        sectors = {a: self.sectors[a] for a in assets if a in self.sectors}
        return replace(
            self,
            assets=assets,
            returns=self.returns[:, idx],
            signs=self.signs[:, idx],
            norm_return=self.norm_return[idx],
            norm_sign=self.norm_sign[idx],
            sectors=sectors,
        )

    def split(self, fraction: float) -> tuple["Panel", "Panel"]:
        """Chronological split at the given fraction, on a session boundary if any."""
        cut = int(round(self.n_bins * fraction))
        cut = min(max(cut, 1), self.n_bins - 1)
        # move the cut to the next session start so neither half straddles one
        sid = self.session_id
        while 0 < cut < self.n_bins and sid[cut] == sid[cut - 1]:
            cut += 1
            if cut >= self.n_bins:
                cut = int(round(self.n_bins * fraction))
                break
        return self._rows(slice(0, cut)), self._rows(slice(cut, self.n_bins))

    def split_at(self, when: pd.Timestamp) -> tuple["Panel", "Panel"]:
        cut = int(np.searchsorted(self.times, np.datetime64(when)))
        cut = min(max(cut, 1), self.n_bins - 1)
        return self._rows(slice(0, cut)), self._rows(slice(cut, self.n_bins))

    def _rows(self, rows: slice) -> "Panel":
        return replace(
            self,
            times=self.times[rows],
            returns=self.returns[rows],
            signs=self.signs[rows],
            session_id=self.session_id[rows],
        )


def _parse_records(path: str, schema: Mapping[str, str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read panel file: {exc}", path=path) from None
    missing = [schema[k] for k in DEFAULT_SCHEMA if schema[k] not in frame.columns]
    if missing:
        raise ParseError(f"missing columns {missing}", path=path, line=1)
    frame = frame.rename(columns={schema[k]: k for k in DEFAULT_SCHEMA})
    frame["_line"] = np.arange(2, len(frame) + 2)  # 1-based, after header

    times = pd.to_datetime(frame["time"], utc=True, format="ISO8601", errors="coerce")
    if times.isna().any():
        bad = int(frame["_line"][times.isna()].iloc[0])
        raise ParseError("unparseable timestamp", path=path, line=bad)
    frame["time"] = times.dt.tz_convert("UTC").dt.tz_localize(None)

    for col in ("price", "n_buy", "n_sell"):
        vals = pd.to_numeric(frame[col], errors="coerce")
        if vals.isna().any():
            bad = int(frame["_line"][vals.isna()].iloc[0])
            raise ParseError(f"non-numeric {col}", path=path, line=bad)
        frame[col] = vals.astype(float)
    for col in ("n_buy", "n_sell"):
        neg = frame[col] < 0
        if neg.any():
            bad = int(frame["_line"][neg].iloc[0])
            raise ParseError(f"negative {col}", path=path, line=bad)

    dup = frame.duplicated(subset=["time", "asset"])
    if dup.any():
        bad = int(frame["_line"][dup].iloc[0])
        raise ParseError("duplicate (time, asset) record", path=path, line=bad)
    return frame


def _load_sectors(path: str) -> dict[str, str]:
    try:
        frame = pd.read_csv(path, dtype=str)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read sector file: {exc}", path=path) from None
    cols = {c.lower(): c for c in frame.columns}
    if "asset" not in cols or "sector" not in cols:
        raise ParseError("sector file needs 'asset' and 'sector' columns", path=path, line=1)
    return dict(zip(frame[cols["asset"]], frame[cols["sector"]]))


def _session_keep_mask(
    times: pd.Series,
    bin_minutes: float,
    open_skip_minutes: float,
    close_skip_minutes: float,
) -> np.ndarray:
    """Keep-mask dropping bins close to the observed session open/close.

    Session bounds are taken per calendar day from the data itself (first bin
    start, last bin end), so half days shrink their own windows.  A bin is
    dropped when it ends within ``open_skip`` of the open, or less than
    ``close_skip`` before the close.
    """
    t = pd.Series(times).reset_index(drop=True)
    day = t.dt.normalize()
    keep = np.ones(len(t), dtype=bool)
    bin_delta = pd.Timedelta(minutes=bin_minutes)
    for _, idx in t.groupby(day).groups.items():
        ends = t[idx]
        open_ = ends.min() - bin_delta
        close = ends.max()
        after_open = (ends - open_) <= pd.Timedelta(minutes=open_skip_minutes)
        before_close = (close - ends) < pd.Timedelta(minutes=close_skip_minutes)
        keep[np.asarray(idx)] = ~(after_open | before_close).to_numpy()
    return keep


def session_filter(
    records: Iterable[RawBinRecord],
    open_skip_minutes: float = 60.0,
    close_skip_minutes: float = 30.0,
    bin_minutes: float = 5.0,
) -> Iterator[RawBinRecord]:
    """Drop records in the unstable windows after the open and before the close."""
    recs = list(records)
    if not recs:
        return iter(())
    times = pd.Series([r.time for r in recs])
    keep = _session_keep_mask(times, bin_minutes, open_skip_minutes, close_skip_minutes)
    return iter([r for r, k in zip(recs, keep) if k])


def build_series(
    prices: np.ndarray, imbalances: np.ndarray, session_id: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Within-session log-returns and aligned imbalances for one asset.

    Returns ``(x, eps, keep_rows)`` where ``keep_rows`` indexes the rows of the
    input that survive (the first bin of each session is consumed by the
    differencing).  Raises :class:`NonPositivePrice` on any price <= 0.
    """
    prices = np.asarray(prices, dtype=float)
    if np.any(prices <= 0):
        raise NonPositivePrice("prices must be strictly positive for log-returns")
    logp = np.log(prices)
    x = np.diff(logp, prepend=np.nan)
    same_session = np.empty(len(prices), dtype=bool)
    same_session[0] = False
    same_session[1:] = session_id[1:] == session_id[:-1]
    keep = np.flatnonzero(same_session)
    return x[keep], np.asarray(imbalances, dtype=float)[keep], keep


def normalize_global(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Standardize each column over the whole period; return (matrix, scales).

    Uses the population standard deviation, so the output has sample variance
    exactly one.  Raises :class:`ZeroVariance` on constant columns.
    """
    matrix = np.asarray(matrix, dtype=float)
    mean = matrix.mean(axis=0)
    scale = matrix.std(axis=0)
    if np.any(scale <= _EPS):
        bad = int(np.argmax(scale <= _EPS))
        raise ZeroVariance(f"column {bad} has zero variance")
    return (matrix - mean) / scale, scale


def _normalize_local(matrix: np.ndarray, session_id: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # per-session standardization; reported scale is the mean session scale
    out = np.empty_like(matrix, dtype=float)
    scales = []
    for sid in np.unique(session_id):
        rows = session_id == sid
        block = matrix[rows]
        std = block.std(axis=0)
        if np.any(std <= _EPS):
            raise ZeroVariance(f"constant column within session {sid}")
        out[rows] = (block - block.mean(axis=0)) / std
        scales.append(std)
    return out, np.mean(scales, axis=0)


def load_panel(
    path: str,
    sector_path: str | None = None,
    schema: Mapping[str, str] | None = None,
    open_skip_minutes: float = 60.0,
    close_skip_minutes: float = 30.0,
    bin_minutes: float = 5.0,
    normalization: str = "global",
    imbalance_scale: float = 1.0,
) -> Panel:
    """Load, filter, align and normalize a bin-level market panel.

    Assets are aligned on the intersection of their timestamps; rows lost to
    alignment or session filtering are counted in ``Panel.dropped_rows``.
    ``imbalance_scale`` divides the raw trade-count imbalance before
    normalization (the global normalization makes this a no-op numerically;
    it only affects the reported ``norm_sign``).
    """
    frame = _parse_records(path, dict(DEFAULT_SCHEMA, **(schema or {})))
    sectors: dict[str, str] = {}
    if sector_path is not None:
        sectors = _load_sectors(sector_path)
        missing = sorted(set(frame["asset"]) - set(sectors))
        if missing:
            raise MissingSector(f"assets without sector assignment: {missing[:5]}")

    n_raw = len(frame)
    keep = _session_keep_mask(frame["time"], bin_minutes, open_skip_minutes, close_skip_minutes)
    frame = frame[keep]

    prices = frame.pivot(index="time", columns="asset", values="price").sort_index()
    imb = (frame["n_buy"] - frame["n_sell"]).to_frame("imb").join(frame[["time", "asset"]])
    imbalances = imb.pivot(index="time", columns="asset", values="imb").sort_index()
    complete = prices.notna().all(axis=1)
    prices = prices[complete]
    imbalances = imbalances[complete]
    if prices.empty:
        raise EmptyIntersection("no timestamp is present for every asset")

    assets = list(prices.columns)
    times = prices.index.to_numpy()
    day = prices.index.normalize()
    session_id = pd.factorize(day)[0]

    cols_x, cols_e, keep_rows = [], [], None
    for a in assets:
        x, e, rows = build_series(prices[a].to_numpy(), imbalances[a].to_numpy(), session_id)
        cols_x.append(x)
        cols_e.append(e / imbalance_scale)
        keep_rows = rows
    returns = np.column_stack(cols_x)
    signs = np.column_stack(cols_e)
    times = times[keep_rows]
    session_id = session_id[keep_rows]

    if normalization == "local":
        returns, scale_x = _normalize_local(returns, session_id)
        signs, scale_e = _normalize_local(signs, session_id)
    elif normalization == "global":
        returns, scale_x = normalize_global(returns)
        signs, scale_e = normalize_global(signs)
    elif normalization == "none":
        scale_x = np.ones(len(assets))
        scale_e = np.ones(len(assets))
    else:
        raise ConfigError(f"unknown normalization {normalization!r}")

    dropped = n_raw - len(returns) * len(assets)
    return Panel(
        assets=assets,
        times=times,
        returns=returns,
        signs=signs,
        session_id=session_id,
        norm_return=scale_x,
        norm_sign=scale_e,
        sectors=sectors,
        dropped_rows=int(dropped),
        normalization=normalization,
    )


def panel_from_arrays(
    returns: np.ndarray,
    signs: np.ndarray,
    assets: Sequence[str] | None = None,
    sectors: Mapping[str, str] | None = None,
    session_id: np.ndarray | None = None,
    normalize: bool = True,
) -> Panel:
    """Build a Panel straight from raw return/sign arrays (one session by default)."""
    returns = np.asarray(returns, dtype=float)
    signs = np.asarray(signs, dtype=float)
    if returns.shape != signs.shape:
        raise ValueError("returns and signs must have identical shape")
    t, n = returns.shape
    if assets is None:
        width = len(str(n - 1))
        assets = [f"A{i:0{width}d}" for i in range(n)]
    if session_id is None:
        session_id = np.zeros(t, dtype=int)
    if normalize:
        returns, scale_x = normalize_global(returns)
        signs, scale_e = normalize_global(signs)
    else:
        scale_x = np.ones(n)
        scale_e = np.ones(n)
    times = (
        np.datetime64("2012-01-02T08:00:00") + np.arange(t) * np.timedelta64(300, "s")
    )
    return Panel(
        assets=list(assets),
        times=times,
        returns=returns,
        signs=signs,
        session_id=np.asarray(session_id, dtype=int),
        norm_return=scale_x,
        norm_sign=scale_e,
        sectors=dict(sectors or {}),
    )
