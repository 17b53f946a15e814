"""
Stages shared by the subcommands: loading panels, the fitted delta table,
the predictive and passive regression suites and the cross-sectional tables.

Every function here returns frames; the command layer decides where they go.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from .config import DataSettings, PipelineConfig, RegressSettings, XsecSettings
from .cross_section import (
    compute_ivol,
    corollary41_check,
    decompose,
    decomposition_summary,
    rank_diagnostic,
    tertile_analysis,
    xsec_regressions,
)
from .data_io import (
    ExogenousSeries,
    ReturnPanel,
    align_common_sample,
    load_metadata,
    load_returns,
    read_table,
)
from .errors import (
    ConfigError,
    EmptySampleError,
    InsufficientClustersError,
    PreconditionError,
    RankDeficiencyError,
)
from .mislearning import (
    FitCollection,
    MislearningPanel,
    build_mislearning_panel,
    fit_panel,
    fit_panel_expanding,
    spike_threshold,
)
from .outcomes import forward_outcomes, lagged_controls
from .parallel import map_ordered
from .passive import leave_one_year_out, parse_windows, passive_design, passive_proxy
from .regress import RegressionSpec, clean_regressor, run_regression

logger = logging.getLogger(__name__)

CONTROL_COLUMNS = ("own_vol", "mkt_vol")
SWEEP_ESTIMATORS = ("hc3", "nw", "cluster_time", "cluster_series", "cluster_twoway")
RESULT_COLUMNS = ["sample", "factor", "outcome", "ctrl", "coef", "se", "t", "p", "obs", "r2", "estimator"]

# Failures that drop one specification rather than the whole run
SKIPPABLE = (EmptySampleError, PreconditionError, RankDeficiencyError, InsufficientClustersError)


# ===== PANELS =====


def load_panel(data: DataSettings, source: str = "returns") -> ReturnPanel:
    """The configured return panel (``returns``) or anomaly panel (``anomalies``)."""
    metadata = load_metadata(data.metadata) if data.metadata is not None else {}
    if source == "returns":
        if data.returns is None:
            raise ConfigError("data.returns", "no return file configured")
        panel = load_returns(data.returns, data.returns_layout, data.returns_unit, metadata)
        if data.common_sample:
            panel = align_common_sample(panel, data.series or panel.series_ids)
        elif data.series:
            panel = panel.select(data.series)
    elif source == "anomalies":
        if data.anomalies is None:
            raise ConfigError("data.anomalies", "no anomaly file configured")
        panel = load_returns(data.anomalies, data.anomalies_layout, data.anomalies_unit, metadata)
    else:
        raise PreconditionError(f"unknown panel source '{source}'")
    if len(panel) == 0:
        raise EmptySampleError(f"the {source} panel has no observations")
    logger.info("%s panel: %d series, %d observations", source, len(panel.series_ids), len(panel))
    return panel


def load_ivol_factors(data: DataSettings) -> pd.DataFrame | None:
    """Wide frame of the three IVOL factors, or None when no factor file is configured."""
    if data.factors is None:
        logger.warning("no factor file configured; IVOL columns stay empty")
        return None
    wide = load_returns(data.factors, data.factors_layout, data.factors_unit).to_wide()
    missing = [name for name in data.ivol_factors if name not in wide.columns]
    if missing:
        raise ConfigError("data.ivol_factors", f"factors not in {data.factors}: {', '.join(missing)}")
    return wide[list(data.ivol_factors)]


# ===== FIT STAGE =====


@dataclass
class FitStage:
    fits: FitCollection
    mislearning: MislearningPanel


def run_fit_stage(panel: ReturnPanel, cfg: PipelineConfig) -> FitStage:
    fits = fit_panel(panel, cfg.fit, threads=cfg.run.threads)
    expanding = fit_panel_expanding(panel, cfg.fit, threads=cfg.run.threads) if cfg.fit.expanding_window else None
    mislearning = build_mislearning_panel(
        fits, cfg.mislearning.rolling_window, cfg.mislearning.spike_quantile, expanding
    )
    return FitStage(fits, mislearning)


def stable_fit_table(fits: FitCollection) -> pd.DataFrame:
    rows = []
    for series_id in fits.series_ids:
        fit = fits.stable[series_id]
        rows.append(
            {
                "series": series_id,
                **fit.params.as_dict(),
                "loglik": fit.loglik,
                "aic": fit.aic,
                "bic": fit.bic,
                "obs": fit.n_obs,
                "converged": fit.converged,
                "degenerate": fit.degenerate,
                "starts_ok": fit.n_starts_ok,
            }
        )
    return pd.DataFrame(rows)


def break_fit_table(fits: FitCollection) -> pd.DataFrame:
    rows = []
    for series_id in fits.series_ids:
        fit = fits.brk[series_id]
        rows.append(
            {
                "series": series_id,
                **fit.params.as_dict(),
                "loglik": fit.loglik,
                "aic": fit.aic,
                "bic": fit.bic,
                "obs": fit.n_obs,
                "converged": fit.converged,
                "degenerate": fit.degenerate,
                "starts_ok": fit.n_starts_ok,
            }
        )
    return pd.DataFrame(rows)


def filter_states_table(stage: FitStage) -> pd.DataFrame:
    """Filtered premium with its two-s.d. band, break probabilities and delta, per series and month."""
    parts = []
    for series_id in stage.fits.series_ids:
        stable = stage.fits.stable[series_id].to_frame()
        brk = stage.fits.brk[series_id].to_frame()
        merged = stable[["month", "filt_mean", "filt_lower", "filt_upper", "pred_mean", "gain"]].merge(
            brk[["month", "break_prob", "pred_break_prob", "next_break_prob"]], on="month"
        )
        deltas = stage.mislearning.series(series_id)[["delta", "rolling_delta"]]
        merged = merged.merge(deltas, left_on="month", right_index=True, how="left")
        merged.insert(0, "series", series_id)
        parts.append(merged)
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame()


def delta_table(mislearning: MislearningPanel) -> pd.DataFrame:
    columns = ["series", "month", "delta", "rolling_delta", "break_prob", "spike", "degenerate"]
    return mislearning.frame[columns]


def read_mislearning(path: str | Path, quantile: float) -> MislearningPanel:
    """Rebuild a delta panel from a written delta table; the spike threshold is re-pooled."""
    frame = read_table(path)
    frame["degenerate"] = frame["degenerate"].astype(bool)
    pool = frame.loc[~frame["degenerate"], "delta"]
    tau = spike_threshold(pool if not pool.empty else frame["delta"], quantile)
    frame["spike"] = frame["delta"] > tau
    return MislearningPanel(frame, tau, quantile)


def mislearning_for(panel: ReturnPanel, cfg: PipelineConfig, cached: Path) -> MislearningPanel:
    """Reuse a delta table from an earlier ``fit`` when it covers the same series, else fit now."""
    if cached.exists():
        mislearning = read_mislearning(cached, cfg.mislearning.spike_quantile)
        if set(mislearning.frame["series"].unique()) <= set(panel.series_ids):
            logger.info("using deltas from %s", cached)
            return mislearning
        logger.warning("%s covers other series; refitting", cached)
    return run_fit_stage(panel, cfg).mislearning


# ===== REGRESSION SUITE =====


def regression_frame(mislearning: MislearningPanel, panel: ReturnPanel, cfg: PipelineConfig) -> pd.DataFrame:
    """Deltas joined to forward outcomes (every horizon) and lagged controls."""
    settings = cfg.regress
    horizons = sorted(set(settings.horizons) | {settings.passive_horizon})
    outcomes = forward_outcomes(panel, horizons, settings.failure_quantile)
    controls = lagged_controls(panel, settings.controls_window, market_series=cfg.data.market_series)
    deltas = mislearning.frame[["series", "month", "delta", "rolling_delta", "break_prob", "spike"]]
    frame = deltas.merge(outcomes, on=["series", "month"], how="inner")
    frame = frame.merge(controls, on=["series", "month"], how="left")
    frame["family"] = frame["series"].map(lambda s: panel.metadata.get(s))
    return frame


def _groups(frame: pd.DataFrame) -> list[tuple[str, pd.DataFrame]]:
    groups = [(series_id, frame.loc[frame["series"] == series_id]) for series_id in sorted(frame["series"].unique())]
    groups.append(("pooled", frame))
    for family in sorted(frame["family"].dropna().unique()):
        groups.append((f"family:{family}", frame.loc[frame["family"] == family]))
    return groups


def _run_job(job: tuple[dict, pd.DataFrame, RegressionSpec]):
    _, data, spec = job
    return run_regression(data, spec)


def _collect(jobs: list, threads: int) -> list[dict]:
    outcomes = map_ordered(_run_job, jobs, threads=threads, return_exceptions=True)
    rows = []
    for (label, _, spec), outcome in zip(jobs, outcomes, strict=True):
        if isinstance(outcome, SKIPPABLE):
            logger.warning("skipped %s (%s): %s", spec.name, label.get("factor", ""), outcome)
        elif isinstance(outcome, BaseException):
            raise outcome
        else:
            rows.append({**label, **outcome.row(spec.regressors[0]), "estimator": spec.estimator})
    return rows


def _suite_jobs(frame: pd.DataFrame, cfg: PipelineConfig, sample: str) -> list:
    settings = cfg.regress
    jobs = []
    groups = _groups(frame)
    for h in settings.horizons:
        for outcome in settings.outcomes:
            for controlled in (False, True):
                spec = RegressionSpec(
                    outcome=outcome,
                    regressors=("delta",),
                    controls=CONTROL_COLUMNS if controlled else (),
                    estimator=settings.estimator,
                    nw_lag=cfg.nw_lag_for(h),
                    cluster_correction=settings.cluster_correction,
                    horizon=h,
                    name=f"{outcome}_{h}m{'_ctrl' if controlled else ''}",
                )
                for factor, group in groups:
                    label = {
                        "sample": sample,
                        "factor": factor,
                        "outcome": f"{outcome}_{h}m",
                        "ctrl": "yes" if controlled else "no",
                    }
                    jobs.append((label, group.loc[group["h"] == h], spec))
    return jobs


def clean_by_horizon(frame: pd.DataFrame, method: str, fraction: float) -> pd.DataFrame:
    parts = [clean_regressor(frame.loc[frame["h"] == h], "delta", method, fraction) for h in sorted(frame["h"].unique())]
    return pd.concat(parts, ignore_index=True)


def run_regression_suite(frame: pd.DataFrame, cfg: PipelineConfig, sample: str | None = None) -> pd.DataFrame:
    """Baseline and controlled predictive regressions per factor, pooled and per family.

    With a robustness method configured the suite is repeated on the cleaned deltas
    under the sample label ``<sample>_<method>``.
    """
    sample = sample or cfg.data.sample_name
    rows = _collect(_suite_jobs(frame, cfg, sample), cfg.run.threads)
    method = cfg.regress.robustness
    if method != "none":
        cleaned = clean_by_horizon(frame, method, cfg.regress.robustness_fraction)
        rows += _collect(_suite_jobs(cleaned, cfg, f"{sample}_{method}"), cfg.run.threads)
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def inference_sweep_table(frame: pd.DataFrame, cfg: PipelineConfig, sample: str | None = None) -> pd.DataFrame:
    """Pooled controlled regressions under every covariance estimator."""
    sample = sample or cfg.data.sample_name
    settings = cfg.regress
    jobs = []
    for h in settings.horizons:
        data = frame.loc[frame["h"] == h]
        for outcome in settings.outcomes:
            base = RegressionSpec(
                outcome=outcome,
                regressors=("delta",),
                controls=CONTROL_COLUMNS,
                nw_lag=cfg.nw_lag_for(h),
                cluster_correction=settings.cluster_correction,
                horizon=h,
                name=f"sweep_{outcome}_{h}m",
            )
            for estimator in SWEEP_ESTIMATORS:
                label = {"sample": sample, "factor": "pooled", "outcome": f"{outcome}_{h}m", "ctrl": "yes"}
                jobs.append((label, data, base.with_estimator(estimator)))
    return pd.DataFrame(_collect(jobs, cfg.run.threads), columns=RESULT_COLUMNS)


# ===== PASSIVE OWNERSHIP =====


def passive_tables(
    mislearning: MislearningPanel, frame: pd.DataFrame, passive: ExogenousSeries, cfg: PipelineConfig
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Interaction regressions for every (variant, fixed effects) pair and optional leave-one-year-out refits."""
    settings: RegressSettings = cfg.regress
    proxy = passive_proxy(passive, settings.passive_detrend, settings.hp_lambda)
    exclude = parse_windows(settings.passive_exclude)
    h = settings.passive_horizon
    rows, loyo_rows = [], []
    for variant in settings.passive_variants:
        for fe in settings.passive_fe:
            if variant == "onset":
                data = mislearning.frame[["series", "month", "delta", "break_prob"]]
            else:
                data = frame.loc[frame["h"] == h]
            design, spec = passive_design(
                data,
                proxy,
                variant,
                fe,
                outcome=settings.passive_outcome,
                controls=CONTROL_COLUMNS,
                estimator=settings.passive_estimator,
                nw_lag=cfg.nw_lag_for(h) if variant == "outcome" else 0,
                break_threshold=cfg.mislearning.break_threshold,
                exclude=exclude,
                horizon=h if variant == "outcome" else None,
            )
            try:
                result = run_regression(design, spec)
            except SKIPPABLE as e:
                logger.error("passive %s regression with %s effects failed: %s", variant, fe, e)
                continue
            table = result.to_frame()
            table.insert(0, "fe", fe)
            table.insert(0, "variant", variant)
            table["detrended"] = settings.passive_detrend
            rows.append(table)
            if settings.leave_one_year_out:
                for year, coef in leave_one_year_out(spec, design).items():
                    loyo_rows.append({"variant": variant, "fe": fe, "year": year, "coef": coef})
    results = pd.concat(rows, ignore_index=True) if rows else pd.DataFrame()
    return results, pd.DataFrame(loyo_rows, columns=["variant", "fe", "year", "coef"])


# ===== CROSS-SECTION =====


def decomposition_table(
    mislearning: MislearningPanel,
    panel: ReturnPanel,
    factors: pd.DataFrame | None,
    cfg: PipelineConfig,
) -> pd.DataFrame:
    """One decomposition row per series, with IVOL when factors are available."""
    xs: XsecSettings = cfg.xsec
    rows = []
    for series_id in sorted(mislearning.frame["series"].unique()):
        part = mislearning.series(series_id)
        row = decompose(
            part["delta"], part["break_prob"], mislearning.threshold, series_id, cfg.mislearning.break_threshold
        )
        row.degenerate_flag = bool(part["degenerate"].iloc[0])
        if factors is not None:
            ivol = compute_ivol(panel.get(series_id), factors, xs.ivol_min_obs)
            row.ivol, row.one_minus_r2 = ivol.ivol, ivol.one_minus_r2
        rows.append(row.to_dict())
    table = pd.DataFrame(rows)
    table["ivol_pct"] = table["ivol"] * xs.ivol_scale
    return table


def xsec_tables(rows: pd.DataFrame, tau: float, cfg: PipelineConfig) -> dict[str, pd.DataFrame]:
    """Summary, tertile, regression, monotonicity and rank tables; steps without enough rows are skipped."""
    xs = cfg.xsec
    usable = rows.loc[~rows["degenerate_flag"]]
    tables = {"decomposition_summary": decomposition_summary(rows, tau)}
    with_ivol = usable.dropna(subset=["ivol"])
    checks = [corollary41_check(usable, xs.mu0_tolerance)] if not usable.empty else []
    try:
        report = tertile_analysis(with_ivol, xs.ivol_scale)
        tables["tertile_regressions"] = report.slopes
        tables["tertile_descriptives"] = report.descriptives
        by_tertile = usable.merge(report.assignments[["series", "tertile"]], on="series")
        checks.append(corollary41_check(by_tertile, xs.mu0_tolerance, group_column="tertile"))
    except (PreconditionError, RankDeficiencyError) as e:
        logger.warning("tertile analysis skipped: %s", e)
    try:
        tables["xsec_regressions"] = xsec_regressions(with_ivol)
    except (PreconditionError, RankDeficiencyError) as e:
        logger.warning("cross-sectional regressions skipped: %s", e)
    if checks:
        tables["corollary41"] = pd.concat(checks, ignore_index=True)
    try:
        tables["rank_diagnostic"] = rank_diagnostic(rows, list(xs.rank_columns))
    except PreconditionError as e:
        logger.warning("rank diagnostic skipped: %s", e)
    return tables

