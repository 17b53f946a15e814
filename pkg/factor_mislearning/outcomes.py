"""
Forward performance outcomes and lagged volatility controls.

An origin month t uses the next h available returns strictly after t. The
failure threshold is a full-sample per-series constant, and vol_ratio divides
by the trailing window ending at t; everything else looks forward only.
"""

import logging

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .config import DEFAULT_CONTROLS_WINDOW, DEFAULT_FAILURE_QUANTILE, DEFAULT_HORIZONS, DEFAULT_MAX_HORIZON
from .data_io import ReturnPanel
from .errors import PreconditionError

logger = logging.getLogger(__name__)

OUTCOME_COLUMNS = ["sharpe", "cumret", "vol", "downside_vol", "max_dd", "failure", "vol_ratio"]


def _window_vol(windows: np.ndarray) -> np.ndarray:
    if windows.shape[1] < 2:
        return np.full(windows.shape[0], np.nan)
    vol = windows.std(axis=1, ddof=1)
    return np.where(np.ptp(windows, axis=1) == 0.0, 0.0, vol)


def window_outcomes(windows: np.ndarray, tail_threshold: float) -> dict[str, np.ndarray]:
    """Outcome fields for each row of an (n, h) array of forward returns."""
    cumret = windows.sum(axis=1)
    vol = _window_vol(windows)
    with np.errstate(divide="ignore", invalid="ignore"):
        sharpe = np.where(vol > 0, windows.mean(axis=1) / vol, np.nan)
    negative = windows < 0
    n_neg = negative.sum(axis=1)
    neg_sq = np.where(negative, windows**2, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        downside = np.where(n_neg > 0, np.sqrt(neg_sq / np.maximum(n_neg, 1)), 0.0)
    path = np.concatenate([np.zeros((windows.shape[0], 1)), np.cumsum(windows, axis=1)], axis=1)
    max_dd = (np.maximum.accumulate(path, axis=1) - path).max(axis=1)
    failure = (windows.min(axis=1) < tail_threshold).astype(int)
    return {
        "sharpe": sharpe,
        "cumret": cumret,
        "vol": vol,
        "downside_vol": downside,
        "max_dd": max_dd,
        "failure": failure,
    }


def _series_outcomes(series_id: str, months: pd.PeriodIndex, r: np.ndarray, h: int, q: float) -> pd.DataFrame:
    n = len(r)
    if n <= h:
        return pd.DataFrame()
    tail = float(np.quantile(r, q, method="linear"))
    forward = sliding_window_view(r, h)[1:]  # row i holds r[i+1 .. i+h]
    origins = np.arange(len(forward))
    fields = window_outcomes(forward, tail)

    trailing_vol = np.full(len(origins), np.nan)
    if h >= 2:
        backward = _window_vol(sliding_window_view(r, h))  # row j ends at j+h-1
        ends = origins - (h - 1)
        ok = ends >= 0
        trailing_vol[ok] = backward[ends[ok]]
    with np.errstate(divide="ignore", invalid="ignore"):
        fields["vol_ratio"] = np.where(trailing_vol > 0, fields["vol"] / trailing_vol, np.nan)

    frame = pd.DataFrame(fields)
    frame.insert(0, "h", h)
    frame.insert(0, "month", months[origins])
    frame.insert(0, "series", series_id)
    return frame


def forward_outcomes(
    panel: ReturnPanel,
    horizons=DEFAULT_HORIZONS,
    failure_quantile: float = DEFAULT_FAILURE_QUANTILE,
) -> pd.DataFrame:
    """Long table ``series, month, h`` plus every outcome column.

    Rows exist only where h future observations are available.
    """
    horizons = sorted(set(int(h) for h in horizons))
    if not horizons or horizons[0] < 1 or horizons[-1] > DEFAULT_MAX_HORIZON:
        raise PreconditionError(f"horizons must lie in 1..{DEFAULT_MAX_HORIZON}, got {horizons}")
    if not 0 < failure_quantile < 1:
        raise PreconditionError("failure quantile must lie in (0, 1)")
    parts = []
    for series_id in panel.series_ids:
        series = panel.get(series_id)
        for h in horizons:
            part = _series_outcomes(series_id, series.index, series.to_numpy(), h, failure_quantile)
            if not part.empty:
                parts.append(part)
    if not parts:
        return pd.DataFrame(columns=["series", "month", "h", *OUTCOME_COLUMNS])
    return pd.concat(parts, ignore_index=True)


def lagged_controls(
    panel: ReturnPanel,
    window: int = DEFAULT_CONTROLS_WINDOW,
    market: pd.Series | None = None,
    market_series: str | None = None,
) -> pd.DataFrame:
    """Rolling volatility of the own series and of the market over the ``window``
    observations strictly before t.
    """
    if market is None and market_series is not None and market_series in panel.series_ids:
        market = panel.get(market_series)
    parts = []
    for series_id in panel.series_ids:
        series = panel.get(series_id)
        own = series.rolling(window, min_periods=window).std(ddof=1).shift(1)
        parts.append(pd.DataFrame({"series": series_id, "month": series.index, "own_vol": own.to_numpy()}))
    frame = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=["series", "month", "own_vol"])
    if market is None:
        logger.warning("no market series for controls; mkt_vol left empty")
        frame["mkt_vol"] = np.nan
        return frame
    mkt = market.rolling(window, min_periods=window).std(ddof=1).shift(1).rename("mkt_vol")
    mkt.index.name = "month"
    return frame.merge(mkt.reset_index(), on="month", how="left")
