"""
Passive-ownership interactions: the one-sided HP proxy, the break-onset and
outcome-mapping interaction regressions, and leave-one-year-out refits.
"""

import logging
from collections.abc import Iterable

import numpy as np
import pandas as pd
from statsmodels.tsa.filters.hp_filter import hpfilter

from .config import DEFAULT_BREAK_THRESHOLD, DEFAULT_HP_LAMBDA
from .data_io import ExogenousSeries
from .errors import EmptySampleError, InsufficientClustersError, PreconditionError, RankDeficiencyError
from .months import parse_period
from .regress import RegressionResult, RegressionSpec, run_regression

logger = logging.getLogger(__name__)

VARIANTS = ("onset", "outcome")
INTERACTION_TERMS = {"onset": "break:passive", "outcome": "delta:passive"}


def one_sided_hp_detrend(series: ExogenousSeries | pd.Series, lamb: float = DEFAULT_HP_LAMBDA) -> pd.Series:
    """Cycle_t = y_t - trend_t where each trend solves the HP problem on data through t only."""
    values = series.values if isinstance(series, ExogenousSeries) else series
    if lamb <= 0:
        raise PreconditionError(f"HP lambda must be > 0, got {lamb}")
    if len(values) < 4:
        raise PreconditionError(f"one-sided HP filter needs >= 4 observations, got {len(values)}")
    y = values.to_numpy(dtype=float)
    cycle = np.zeros(len(y))
    for t in range(2, len(y)):
        prefix_cycle, prefix_trend = hpfilter(y[: t + 1], lamb=lamb)
        if not np.isfinite(prefix_trend[-1]):
            raise PreconditionError(f"HP system could not be solved at position {t}")
        cycle[t] = prefix_cycle[-1]
    return pd.Series(cycle, index=values.index, name="passive_cycle")


def passive_proxy(passive: ExogenousSeries, detrend: bool = False, lamb: float = DEFAULT_HP_LAMBDA) -> pd.Series:
    """Level share or its one-sided HP cycle."""
    if detrend:
        return one_sided_hp_detrend(passive, lamb)
    return passive.values.rename("passive")


def parse_windows(windows: Iterable[str]) -> list[tuple[pd.Period, pd.Period]]:
    """``START:END`` month tokens (inclusive)."""
    out = []
    for token in windows:
        start, _, end = token.partition(":")
        out.append((parse_period(start), parse_period(end)))
    return out


def exclude_months(frame: pd.DataFrame, windows: list[tuple[pd.Period, pd.Period]]) -> pd.DataFrame:
    keep = np.ones(len(frame), dtype=bool)
    for start, end in windows:
        keep &= ~((frame["month"] >= start) & (frame["month"] <= end)).to_numpy()
    return frame.loc[keep]


def passive_design(
    data: pd.DataFrame,
    passive: pd.Series,
    variant: str,
    fe: str = "series",
    outcome: str = "cumret",
    controls: tuple[str, ...] = (),
    estimator: str = "cluster_twoway",
    nw_lag: int = 0,
    break_threshold: float = DEFAULT_BREAK_THRESHOLD,
    exclude: list[tuple[pd.Period, pd.Period]] | None = None,
    horizon: int | None = None,
) -> tuple[pd.DataFrame, RegressionSpec]:
    """Regression frame and spec for one interaction variant.

    The passive proxy enters lagged one month. With month fixed effects its main
    effect is absorbed and only the interaction is identified.
    """
    if variant not in VARIANTS:
        raise PreconditionError(f"variant must be one of {VARIANTS}, got '{variant}'")
    if fe not in ("series", "series+month"):
        raise PreconditionError(f"fe must be 'series' or 'series+month', got '{fe}'")

    lagged = passive.copy()
    lagged.index = lagged.index + 1
    frame = data.copy()
    frame["passive"] = frame["month"].map(lagged)
    absent = frame["passive"].isna()
    if absent.any():
        months = sorted(frame.loc[absent, "month"].astype(str).unique())
        logger.warning(
            "passive proxy missing for %d months (%d rows dropped): %s",
            len(months),
            int(absent.sum()),
            ", ".join(months[:12]) + (" ..." if len(months) > 12 else ""),
        )
        frame = frame.loc[~absent]
    if exclude:
        frame = exclude_months(frame, exclude)
    frame["break"] = (frame["break_prob"] >= break_threshold).astype(float)

    fe_dims = ("series",) if fe == "series" else ("series", "month")
    main = () if fe == "series+month" else ("passive",)
    if variant == "onset":
        spec = RegressionSpec(
            outcome="delta",
            regressors=("break", *main),
            interactions=(("break", "passive"),),
            fe=fe_dims,
            estimator=estimator,
            nw_lag=nw_lag,
            name=f"passive_onset_{fe}",
        )
    else:
        spec = RegressionSpec(
            outcome=outcome,
            regressors=("delta", *main),
            interactions=(("delta", "passive"),),
            controls=tuple(controls),
            fe=fe_dims,
            estimator=estimator,
            nw_lag=nw_lag,
            horizon=horizon,
            name=f"passive_outcome_{fe}",
        )
    return frame, spec


def passive_interaction_suite(data: pd.DataFrame, passive: pd.Series, variant: str, fe: str = "series", **kwargs) -> RegressionResult:
    """Break-onset (delta on break x passive) or outcome-mapping (outcome on delta x passive) regression."""
    frame, spec = passive_design(data, passive, variant, fe, **kwargs)
    return run_regression(frame, spec)


def leave_one_year_out(
    spec: RegressionSpec,
    data: pd.DataFrame,
    years: Iterable[int] | None = None,
    term: str | None = None,
) -> dict[int, float]:
    """Refit excluding each calendar year of forecast origins; coefficient on ``term`` per year."""
    sample_years = sorted(set(data["month"].dt.year))
    if len(sample_years) < 2:
        raise PreconditionError("leave-one-year-out needs at least two calendar years")
    term = term or (f"{spec.interactions[0][0]}:{spec.interactions[0][1]}" if spec.interactions else spec.columns[0])
    out: dict[int, float] = {}
    for year in sorted(years) if years is not None else sample_years:
        subset = data.loc[data["month"].dt.year != year]
        try:
            out[year] = float(run_regression(subset, spec).coef[term])
        except (EmptySampleError, InsufficientClustersError, PreconditionError, RankDeficiencyError) as e:
            logger.warning("leave-one-year-out skipped %d: %s", year, e)
    return out
