"""
Mislearning intensity: the log ratio of break-aware to stable one-step
predictive densities, its rolling mean, spike flags and model comparison.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .break_model import BREAK_PARAM_COUNT, BreakFit, fit_break_mle, hamilton_filter
from .config import (
    DEFAULT_REFIT_EVERY,
    DEFAULT_ROLLING_WINDOW,
    DEFAULT_SPIKE_QUANTILE,
    FitSettings,
)
from .data_io import ReturnPanel
from .errors import AlignmentError, EmptySampleError, EstimationError, PreconditionError
from .parallel import map_ordered
from .stable_filter import STABLE_PARAM_COUNT, StableFit, fit_stable_mle, kalman_filter

logger = logging.getLogger(__name__)


def compute_delta(stable: StableFit, brk: BreakFit) -> pd.Series:
    """Delta_t = log p_B(f_t | F_{t-1}) - log p_S(f_t | F_{t-1}).

    Raises:
        AlignmentError: the two fits cover different months
    """
    if len(stable.index) != len(brk.index) or not stable.index.equals(brk.index):
        left, right = pd.Index(stable.index), pd.Index(brk.index)
        diff = left.symmetric_difference(right)
        if diff.empty and len(left) == len(right):
            diff = left[left != right]
        raise AlignmentError([str(m) for m in diff])
    return pd.Series(brk.logdens - stable.logdens, index=stable.index, name="delta")


def rolling_delta(delta: pd.Series, m: int = DEFAULT_ROLLING_WINDOW) -> pd.Series:
    """Mean of the m most recent deltas ending at t; NaN until m values exist."""
    if m < 1:
        raise PreconditionError(f"rolling window must be >= 1, got {m}")
    return delta.rolling(window=m, min_periods=m).mean().rename("rolling_delta")


def spike_threshold(deltas, q: float = DEFAULT_SPIKE_QUANTILE) -> float:
    """Pooled type-7 quantile of all deltas supplied (arrays, Series or a list of them)."""
    if not 0.0 < q < 1.0:
        raise PreconditionError(f"quantile must lie in (0, 1), got {q}")
    if isinstance(deltas, (list, tuple)):
        parts = [np.asarray(d, dtype=float).ravel() for d in deltas]
        pool = np.concatenate(parts) if parts else np.empty(0)
    else:
        pool = np.asarray(deltas, dtype=float).ravel()
    pool = pool[np.isfinite(pool)]
    if pool.size == 0:
        raise EmptySampleError("spike threshold needs a nonempty pool of deltas")
    return float(np.quantile(pool, q, method="linear"))


def model_comparison_table(stable_fits: dict[str, StableFit], break_fits: dict[str, BreakFit]) -> pd.DataFrame:
    """Per-series fit statistics; positive delta_aic/delta_bic favor the break model."""
    if set(stable_fits) != set(break_fits):
        missing = sorted(set(stable_fits) ^ set(break_fits))
        raise PreconditionError(f"fits are not matched for series: {', '.join(missing)}")
    rows = []
    for series_id in sorted(stable_fits):
        s, b = stable_fits[series_id], break_fits[series_id]
        rows.append(
            {
                "series": series_id,
                "obs": s.n_obs,
                "ll_stable": s.loglik,
                "aic_stable": s.aic,
                "bic_stable": s.bic,
                "ll_break": b.loglik,
                "aic_break": b.aic,
                "bic_break": b.bic,
                "delta_ll": b.loglik - s.loglik,
                "delta_aic": s.aic - b.aic,
                "delta_bic": s.bic - b.bic,
                "params": f"{STABLE_PARAM_COUNT} / {BREAK_PARAM_COUNT}",
            }
        )
    return pd.DataFrame(rows)


# ===== PANEL FITTING =====


@dataclass
class FitCollection:
    stable: dict[str, StableFit] = field(default_factory=dict)
    brk: dict[str, BreakFit] = field(default_factory=dict)
    warnings: list[dict[str, str]] = field(default_factory=list)

    @property
    def series_ids(self) -> list[str]:
        return sorted(set(self.stable) & set(self.brk))

    def degenerate(self, series_id: str) -> bool:
        return self.stable[series_id].degenerate or self.brk[series_id].degenerate


def _fit_one(job: tuple[str, pd.Series, FitSettings]) -> tuple[StableFit, BreakFit]:
    _, series, settings = job
    stable = fit_stable_mle(
        series,
        min_obs=settings.stable_min_obs,
        n_starts=settings.stable_starts,
        sd_floor=settings.sd_floor,
        tol=settings.tolerance,
    )
    brk = fit_break_mle(
        series,
        min_obs=settings.break_min_obs,
        n_starts=settings.break_starts,
        sd_floor=settings.sd_floor,
        tol=settings.tolerance,
    )
    return stable, brk


def fit_panel(panel: ReturnPanel, settings: FitSettings, threads: int = 1) -> FitCollection:
    """Fit both models to every series; short or failed series become warning rows."""
    jobs = [(series_id, panel.get(series_id), settings) for series_id in panel.series_ids]
    outcomes = map_ordered(_fit_one, jobs, threads=threads, return_exceptions=True)
    collection = FitCollection()
    for (series_id, _, _), outcome in zip(jobs, outcomes, strict=True):
        if isinstance(outcome, PreconditionError):
            logger.warning("skipping %s: %s", series_id, outcome)
            collection.warnings.append({"series": series_id, "status": "skipped", "message": str(outcome)})
        elif isinstance(outcome, EstimationError):
            logger.warning("estimation failed for %s: %s", series_id, outcome)
            collection.warnings.append({"series": series_id, "status": "failed", "message": str(outcome)})
        elif isinstance(outcome, BaseException):
            raise outcome
        else:
            stable, brk = outcome
            collection.stable[series_id], collection.brk[series_id] = stable, brk
            if stable.degenerate or brk.degenerate:
                notes = "; ".join(stable.notes + brk.notes)
                collection.warnings.append({"series": series_id, "status": "degenerate", "message": notes})
    return collection


@dataclass
class MislearningPanel:
    """Long table ``series, month, delta, rolling_delta, break_prob, spike, degenerate``."""

    frame: pd.DataFrame
    threshold: float
    quantile: float

    def series(self, series_id: str) -> pd.DataFrame:
        return self.frame.loc[self.frame["series"] == series_id].set_index("month")

    def pooled(self) -> np.ndarray:
        """Deltas of non-degenerate series."""
        return self.frame.loc[~self.frame["degenerate"], "delta"].to_numpy()


def build_mislearning_panel(
    fits: FitCollection,
    window: int = DEFAULT_ROLLING_WINDOW,
    quantile: float = DEFAULT_SPIKE_QUANTILE,
    expanding: dict[str, tuple[pd.Series, pd.Series]] | None = None,
) -> MislearningPanel:
    """Assemble per-series deltas and flag spikes against the pooled threshold.

    Degenerate fits stay in the table but do not enter the threshold pool.
    ``expanding`` replaces full-sample deltas with out-of-sample (delta, break_prob) pairs.
    """
    parts = []
    ids = sorted(expanding) if expanding is not None else fits.series_ids
    for series_id in ids:
        if expanding is not None:
            delta, probs = expanding[series_id]
        else:
            brk = fits.brk[series_id]
            delta = compute_delta(fits.stable[series_id], brk)
            probs = pd.Series(brk.filt_prob[:, 1], index=brk.index)
        degenerate = series_id in fits.stable and series_id in fits.brk and fits.degenerate(series_id)
        parts.append(
            pd.DataFrame(
                {
                    "series": series_id,
                    "month": delta.index,
                    "delta": delta.to_numpy(),
                    "rolling_delta": rolling_delta(delta, window).to_numpy(),
                    "break_prob": probs.reindex(delta.index).to_numpy(),
                    "degenerate": degenerate,
                }
            )
        )
    if not parts:
        raise EmptySampleError("no fitted series to build deltas from")
    frame = pd.concat(parts, ignore_index=True)
    pool = frame.loc[~frame["degenerate"], "delta"]
    if pool.empty:
        logger.warning("every fit is degenerate; pooling all series for the spike threshold")
        pool = frame["delta"]
    tau = spike_threshold(pool, quantile)
    frame["spike"] = frame["delta"] > tau
    return MislearningPanel(frame, tau, quantile)


def expanding_window_delta(
    series: pd.Series,
    settings: FitSettings,
    refit_every: int = DEFAULT_REFIT_EVERY,
) -> tuple[pd.Series, pd.Series]:
    """Out-of-sample deltas: each block of ``refit_every`` months uses parameters
    estimated only on data before the block. Returns (delta, filtered break probability).
    """
    n = len(series)
    start = max(settings.stable_min_obs, settings.break_min_obs)
    if n <= start:
        raise PreconditionError(f"expanding window needs more than {start} observations, got {n}")
    deltas, probs = [], []
    for block_start in range(start, n, refit_every):
        block_end = min(block_start + refit_every, n)
        history = series.iloc[:block_start]
        stable = fit_stable_mle(history, settings.stable_min_obs, settings.stable_starts, settings.sd_floor, settings.tolerance)
        brk = fit_break_mle(history, settings.break_min_obs, settings.break_starts, settings.sd_floor, settings.tolerance)
        window = series.iloc[:block_end]
        s_run = kalman_filter(window, stable.params)
        b_run = hamilton_filter(window, brk.params)
        deltas.append(compute_delta(s_run, b_run).iloc[block_start:block_end])
        probs.append(pd.Series(b_run.filt_prob[block_start:block_end, 1], index=window.index[block_start:block_end]))
    return pd.concat(deltas).rename("delta"), pd.concat(probs).rename("break_prob")


def fit_panel_expanding(panel: ReturnPanel, settings: FitSettings, threads: int = 1) -> dict[str, tuple[pd.Series, pd.Series]]:
    """Expanding-window deltas for every long-enough series."""
    def job(series_id: str):
        return expanding_window_delta(panel.get(series_id), settings, settings.refit_every)

    ids = panel.series_ids
    outcomes = map_ordered(job, ids, threads=threads, return_exceptions=True)
    result = {}
    for series_id, outcome in zip(ids, outcomes, strict=True):
        if isinstance(outcome, (PreconditionError, EstimationError)):
            logger.warning("expanding window skipped for %s: %s", series_id, outcome)
        elif isinstance(outcome, BaseException):
            raise outcome
        else:
            result[series_id] = outcome
    return result


# ===== DIAGNOSTICS =====


def fit_quality_summary(fits: FitCollection, panel: MislearningPanel) -> pd.DataFrame:
    """Counts of converged, degenerate and failed fits plus the pooled delta distribution."""
    ids = fits.series_ids
    failed = sum(1 for w in fits.warnings if w["status"] == "failed")
    skipped = sum(1 for w in fits.warnings if w["status"] == "skipped")
    pool = panel.pooled()
    rows = [
        ("series_fitted", len(ids)),
        ("series_skipped", skipped),
        ("series_failed", failed),
        ("stable_degenerate", sum(fits.stable[s].degenerate for s in ids)),
        ("break_degenerate", sum(fits.brk[s].degenerate for s in ids)),
        ("break_fit_starts_ok_min", min((fits.brk[s].n_starts_ok for s in ids), default=0)),
        ("delta_obs", len(pool)),
        ("delta_mean", float(np.mean(pool)) if len(pool) else np.nan),
        ("delta_sd", float(np.std(pool, ddof=1)) if len(pool) > 1 else np.nan),
        ("delta_skewness", float(stats.skew(pool)) if len(pool) > 2 else np.nan),
        ("delta_excess_kurtosis", float(stats.kurtosis(pool)) if len(pool) > 3 else np.nan),
        ("spike_threshold", panel.threshold),
        ("spike_frequency", float(panel.frame.loc[~panel.frame["degenerate"], "spike"].mean()) if len(pool) else np.nan),
    ]
    for q in (0.01, 0.1, 0.5, 0.9, 0.99):
        rows.append((f"delta_q{int(round(q * 100)):02d}", float(np.quantile(pool, q)) if len(pool) else np.nan))
    return pd.DataFrame(rows, columns=["metric", "value"])


def delta_distribution(panel: MislearningPanel, bins: int = 50) -> pd.DataFrame:
    """Histogram of pooled deltas for plotting."""
    pool = panel.pooled()
    if pool.size == 0:
        return pd.DataFrame(columns=["bin_left", "bin_right", "count"])
    counts, edges = np.histogram(pool, bins=bins)
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})
