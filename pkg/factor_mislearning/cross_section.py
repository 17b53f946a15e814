"""
Series-level decomposition of mean mislearning into break-proneness and
break-state severity, idiosyncratic volatility, and cross-sectional diagnostics.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats

from .config import (
    DEFAULT_BREAK_THRESHOLD,
    DEFAULT_IVOL_MIN_OBS,
    DEFAULT_IVOL_SCALE,
    DEFAULT_MU0_TOLERANCE,
    DEFAULT_TERTILE_MIN_ROWS,
    DEFAULT_XSEC_MIN_ROWS,
)
from .errors import AlignmentError, PreconditionError
from .regress import RegressionSpec, run_regression

logger = logging.getLogger(__name__)

TERTILES = ("low", "medium", "high")


@dataclass
class DecompositionRow:
    series: str
    pi: float
    pi_hard: float
    mu1: float
    mu0: float
    e_delta: float
    spike_freq: float
    q1: float
    q0: float
    q1_soft: float
    q0_soft: float
    decomposition_error: float
    spike_decomposition_error: float
    one_state: bool
    n_obs: int
    ivol: float = np.nan
    one_minus_r2: float = np.nan
    degenerate_flag: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    total = weights.sum()
    return float(np.dot(weights, values) / total) if total > 0 else np.nan


def decompose(
    delta: pd.Series,
    break_prob: pd.Series,
    threshold: float,
    series_id: str = "",
    break_threshold: float = DEFAULT_BREAK_THRESHOLD,
) -> DecompositionRow:
    """Soft-weighted pi, mu1, mu0 and hard-state spike rates for one series.

    A conditional mean with no probability mass is NaN and ``one_state`` is set.
    """
    if not delta.index.equals(break_prob.index):
        diff = delta.index.symmetric_difference(break_prob.index)
        raise AlignmentError([str(m) for m in diff])
    d = delta.to_numpy(dtype=float)
    w = break_prob.to_numpy(dtype=float)
    n = len(d)
    if n == 0:
        raise PreconditionError(f"no observations to decompose for '{series_id}'")

    pi = float(w.mean())
    mu1 = _weighted_mean(d, w)
    mu0 = _weighted_mean(d, 1.0 - w)
    e_delta = float(d.mean())
    implied = (pi * mu1 if not np.isnan(mu1) else 0.0) + ((1.0 - pi) * mu0 if not np.isnan(mu0) else 0.0)

    spike = (d > threshold).astype(float)
    hard = w >= break_threshold
    pi_hard = float(hard.mean())
    q1 = float(spike[hard].mean()) if hard.any() else np.nan
    q0 = float(spike[~hard].mean()) if (~hard).any() else np.nan
    spike_freq = float(spike.mean())
    spike_implied = (pi_hard * q1 if hard.any() else 0.0) + ((1.0 - pi_hard) * q0 if (~hard).any() else 0.0)
    one_state = bool(np.isnan(mu1) or np.isnan(mu0))
    if one_state:
        logger.warning("series %s has all probability mass in one state", series_id)

    return DecompositionRow(
        series=series_id,
        pi=pi,
        pi_hard=pi_hard,
        mu1=mu1,
        mu0=mu0,
        e_delta=e_delta,
        spike_freq=spike_freq,
        q1=q1,
        q0=q0,
        q1_soft=_weighted_mean(spike, w),
        q0_soft=_weighted_mean(spike, 1.0 - w),
        decomposition_error=abs(e_delta - implied),
        spike_decomposition_error=abs(spike_freq - spike_implied),
        one_state=one_state,
        n_obs=n,
    )


@dataclass(frozen=True)
class IvolResult:
    ivol: float
    one_minus_r2: float
    n_obs: int
    insufficient: bool = False


def compute_ivol(
    series: pd.Series, factors: pd.DataFrame, min_obs: int = DEFAULT_IVOL_MIN_OBS
) -> IvolResult:
    """Residual s.d. from OLS of the series on an intercept and three factors (decimal units)."""
    if factors.shape[1] != 3:
        raise PreconditionError(f"IVOL needs exactly three factor columns, got {factors.shape[1]}")
    joined = pd.concat([series.rename("_y"), factors], axis=1, join="inner").dropna()
    n = len(joined)
    if n < min_obs:
        logger.warning("IVOL for %s: %d overlapping months < %d", series.name, n, min_obs)
        return IvolResult(np.nan, np.nan, n, insufficient=True)
    X = sm.add_constant(joined[factors.columns].to_numpy(), has_constant="add")
    fit = sm.OLS(joined["_y"].to_numpy(), X).fit()
    resid = fit.resid
    ivol = float(np.std(resid, ddof=1))
    return IvolResult(ivol, float(1.0 - fit.rsquared) if np.isfinite(fit.rsquared) else 0.0, n)


# ===== TERTILES =====


def assign_tertiles(rows: pd.DataFrame, column: str = "ivol") -> pd.Series:
    """Position-based thirds of rows sorted by (column, series)."""
    ordered = rows.sort_values([column, "series"], kind="mergesort")
    n = len(ordered)
    low_end = (n - 1) // 3 + 1
    mid_end = 2 * (n - 1) // 3 + 1
    labels = np.array([TERTILES[0]] * low_end + [TERTILES[1]] * (mid_end - low_end) + [TERTILES[2]] * (n - mid_end))
    return pd.Series(labels, index=ordered.index, name="tertile").reindex(rows.index)


@dataclass
class TertileReport:
    assignments: pd.DataFrame
    slopes: pd.DataFrame
    descriptives: pd.DataFrame


def tertile_analysis(rows: pd.DataFrame, ivol_scale: float = DEFAULT_IVOL_SCALE) -> TertileReport:
    """Within-tertile HC3 slopes of e_delta and spike_freq on pi, plus descriptives."""
    rows = rows.dropna(subset=["ivol"])
    if len(rows) < DEFAULT_TERTILE_MIN_ROWS:
        raise PreconditionError(f"tertile analysis needs >= {DEFAULT_TERTILE_MIN_ROWS} rows, got {len(rows)}")
    rows = rows.assign(tertile=assign_tertiles(rows))
    slope_rows, desc_rows = [], []
    for label in TERTILES:
        group = rows.loc[rows["tertile"] == label]
        for dependent in ("e_delta", "spike_freq"):
            result = run_regression(group, RegressionSpec(outcome=dependent, regressors=("pi",), estimator="hc3"))
            slope_rows.append({"tertile": label, "dependent": dependent, "intercept": float(result.coef["const"]), **result.row("pi")})
        desc = {"tertile": label, "n": len(group)}
        for column in ("ivol", "pi", "mu1", "mu0", "e_delta", "spike_freq"):
            values = group[column] * (ivol_scale if column == "ivol" else 1.0)
            desc[f"mean_{column}"] = float(values.mean())
            desc[f"sd_{column}"] = float(values.std(ddof=1))
        desc_rows.append(desc)
    return TertileReport(
        assignments=rows[["series", "ivol", "tertile"]].reset_index(drop=True),
        slopes=pd.DataFrame(slope_rows),
        descriptives=pd.DataFrame(desc_rows),
    )


# ===== CROSS-SECTIONAL REGRESSIONS =====

XSEC_MODELS: dict[str, tuple[str, tuple[str, ...]]] = {
    "A1": ("mu1", ("ivol_z",)),
    "A2": ("mu1", ("one_minus_r2_z",)),
    "A3": ("mu1", ("pi",)),
    "B1": ("pi", ("ivol_z",)),
    "B2": ("pi", ("one_minus_r2_z",)),
    "B3": ("mu0", ("ivol_z",)),
    "C1": ("e_delta", ("pi",)),
    "C2": ("e_delta", ("pi", "pi_sq")),
    "C3": ("spike_freq", ("pi",)),
    "C4": ("spike_freq", ("pi", "pi_sq")),
    "C5": ("e_delta", ("pi", "ivol_z")),
}


def _zscore(values: pd.Series) -> pd.Series:
    sd = values.std(ddof=1)
    return (values - values.mean()) / sd if sd > 0 else values * 0.0


def xsec_regressions(rows: pd.DataFrame, min_rows: int = DEFAULT_XSEC_MIN_ROWS) -> pd.DataFrame:
    """HC3 regressions linking break-state severity, break-proneness and IVOL."""
    if len(rows) < min_rows:
        raise PreconditionError(f"cross-sectional regressions need >= {min_rows} rows, got {len(rows)}")
    data = rows.copy()
    data["ivol_z"] = _zscore(data["ivol"])
    data["one_minus_r2_z"] = _zscore(data["one_minus_r2"])
    data["pi_sq"] = data["pi"] ** 2
    out = []
    for model, (dependent, regressors) in XSEC_MODELS.items():
        if data[[dependent, *regressors]].dropna().empty:
            logger.warning("model %s has no complete rows", model)
            continue
        result = run_regression(data, RegressionSpec(outcome=dependent, regressors=regressors, estimator="hc3"))
        for term in result.coef.index:
            out.append({"model": model, "dependent": dependent, "term": term, **result.row(term)})
    return pd.DataFrame(out)


# ===== MONOTONICITY =====


def corollary41_check(
    rows: pd.DataFrame,
    mu0_tolerance: float = DEFAULT_MU0_TOLERANCE,
    group_column: str | None = None,
    tol: float = 1e-12,
) -> pd.DataFrame:
    """Whether mean delta rises with pi, judged only where the sufficient conditions hold.

    Conditions: mu0 common within ``mu0_tolerance``; delta_k = mu1 - mu0 >= 0;
    delta_k weakly increasing in pi.
    """
    if rows.empty:
        raise PreconditionError("monotonicity check needs at least one row")
    groups = [("all", rows)] if group_column is None else list(rows.groupby(group_column, sort=True))
    out = []
    for label, group in groups:
        group = group.dropna(subset=["pi", "mu1", "mu0", "e_delta"])
        ordered = group.sort_values(["pi", "series"], kind="mergesort")
        gap = (ordered["mu1"] - ordered["mu0"]).to_numpy()
        e = ordered["e_delta"].to_numpy()
        n = len(ordered)
        mu0_spread = float(ordered["mu0"].max() - ordered["mu0"].min()) if n else np.nan
        gap_nonneg = bool(np.all(gap >= -tol))
        gap_monotone = bool(np.all(np.diff(gap) >= -max(tol, mu0_tolerance)))
        mu0_common = bool(n > 0 and mu0_spread <= mu0_tolerance)
        hypotheses = gap_nonneg and gap_monotone and mu0_common
        violations = int(np.sum(np.diff(e) < -tol))
        rank_corr = float(stats.spearmanr(ordered["pi"], e).statistic) if n >= 3 else np.nan
        if n < 3:
            status = "insufficient"
        elif not hypotheses:
            status = "hypothesis_violated"
        elif violations == 0 and rank_corr > 0:
            status = "supported"
        else:
            status = "not_supported"
        out.append(
            {
                "group": label,
                "n": n,
                "rank_corr": rank_corr,
                "positive": bool(rank_corr > 0) if n >= 3 else False,
                "violations": violations,
                "mu0_spread": mu0_spread,
                "mu0_common": mu0_common,
                "gap_nonneg": gap_nonneg,
                "gap_monotone": gap_monotone,
                "hypotheses_hold": hypotheses,
                "status": status,
            }
        )
    return pd.DataFrame(out)


def rank_diagnostic(rows: pd.DataFrame, columns) -> pd.DataFrame:
    """Ordinal ranks per metric (1 = largest); ties follow series order."""
    if len(rows) < 3:
        raise PreconditionError(f"rank diagnostic needs >= 3 rows, got {len(rows)}")
    out = rows[["series", *columns]].copy()
    for column in columns:
        ordered = out.sort_values("series", kind="mergesort")
        ordered = ordered.sort_values(column, ascending=False, kind="mergesort", na_position="last")
        ranks = pd.Series(np.arange(1, len(ordered) + 1, dtype=float), index=ordered.index)
        ranks[ordered[column].isna()] = np.nan
        out[f"rank_{column}"] = ranks.reindex(out.index)
    return out.sort_values("series", kind="mergesort").reset_index(drop=True)


def decomposition_summary(rows: pd.DataFrame, tau: float) -> pd.DataFrame:
    """N, means, dispersion, correlations and decomposition errors in one long table."""
    clean = rows.loc[~rows["degenerate_flag"]] if "degenerate_flag" in rows else rows
    metrics: list[tuple[str, float]] = [("N", float(len(clean)))]
    for column in ("pi", "pi_hard", "mu1", "mu0", "e_delta", "spike_freq"):
        metrics.append((f"mean_{column}", float(clean[column].mean())))
        metrics.append((f"sd_{column}", float(clean[column].std(ddof=1))))
    both = clean.dropna(subset=["pi", "e_delta", "mu1"])
    if len(both) >= 3:
        metrics.append(("corr_pi_e_delta", float(both["pi"].corr(both["e_delta"]))))
        metrics.append(("corr_pi_mu1", float(both["pi"].corr(both["mu1"]))))
    metrics.append(("mean_abs_decomposition_error", float(clean["decomposition_error"].mean())))
    metrics.append(("max_abs_decomposition_error", float(clean["decomposition_error"].max())))
    metrics.append(("max_abs_spike_decomposition_error", float(clean["spike_decomposition_error"].max())))
    metrics.append(("spike_threshold", float(tau)))
    return pd.DataFrame(metrics, columns=["metric", "value"])
