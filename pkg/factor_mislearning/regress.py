"""
Pooled OLS with fixed effects absorbed by within-demeaning and interchangeable
covariance estimators (classic, HC3, panel Newey-West, one- and two-way cluster).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from statsmodels.stats import sandwich_covariance as sw

from .config import ESTIMATORS
from .errors import EmptySampleError, InsufficientClustersError, PreconditionError, RankDeficiencyError

logger = logging.getLogger(__name__)

FE_DIMENSIONS = ("series", "month")
_DEMEAN_TOL = 1e-13
_DEMEAN_MAX_ITER = 10_000


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str
    regressors: tuple[str, ...] = ("delta",)
    controls: tuple[str, ...] = ()
    interactions: tuple[tuple[str, str], ...] = ()
    fe: tuple[str, ...] = ()
    estimator: str = "hc3"
    nw_lag: int = 0
    cluster_correction: bool = True
    horizon: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise PreconditionError(f"estimator must be one of {ESTIMATORS}, got '{self.estimator}'")
        if self.nw_lag < 0:
            raise PreconditionError("Newey-West lag must be >= 0")
        unknown = [d for d in self.fe if d not in FE_DIMENSIONS]
        if unknown:
            raise PreconditionError(f"unknown fixed-effect dimensions {unknown}")

    @property
    def columns(self) -> list[str]:
        """Design columns in order (no intercept)."""
        names = list(self.regressors) + [f"{a}:{b}" for a, b in self.interactions] + list(self.controls)
        return list(dict.fromkeys(names))

    def with_estimator(self, estimator: str, nw_lag: int | None = None) -> "RegressionSpec":
        return replace(self, estimator=estimator, nw_lag=self.nw_lag if nw_lag is None else nw_lag)


@dataclass
class RegressionResult:
    spec: RegressionSpec
    coef: pd.Series
    se: pd.Series
    t: pd.Series
    p: pd.Series
    cov: pd.DataFrame
    n_obs: int
    r_squared: float
    df_resid: float
    n_clusters: tuple[int, ...] = ()
    reference: str = "t"
    notes: list[str] = field(default_factory=list)

    def row(self, term: str) -> dict[str, float]:
        return {
            "coef": float(self.coef[term]),
            "se": float(self.se[term]),
            "t": float(self.t[term]),
            "p": float(self.p[term]),
            "obs": self.n_obs,
            "r2": self.r_squared,
        }

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"coef": self.coef, "se": self.se, "t": self.t, "p": self.p})
        frame.index.name = "term"
        frame["obs"] = self.n_obs
        frame["r2"] = self.r_squared
        frame["estimator"] = self.spec.estimator
        return frame.reset_index()


# ===== DESIGN =====


def add_interactions(data: pd.DataFrame, interactions) -> pd.DataFrame:
    out = data.copy()
    for a, b in interactions:
        out[f"{a}:{b}"] = out[a] * out[b]
    return out


def demean(frame: pd.DataFrame, columns: list[str], fe: tuple[str, ...]) -> pd.DataFrame:
    """Within transformation; two dimensions use alternating projections."""
    values = frame[columns].astype(float)
    if not fe:
        return values
    if len(fe) == 1:
        return values - values.groupby(frame[fe[0]].to_numpy()).transform("mean")
    keys = [frame[d].to_numpy() for d in fe]
    current = values
    for _ in range(_DEMEAN_MAX_ITER):
        previous = current
        for key in keys:
            current = current - current.groupby(key).transform("mean")
        if float((current - previous).abs().to_numpy().max(initial=0.0)) < _DEMEAN_TOL:
            break
    else:
        logger.warning("two-way demeaning stopped before converging")
    return current


def collinear_columns(X: np.ndarray, names: list[str], tol: float | None = None) -> list[str]:
    """Columns that add no rank when appended left to right."""
    kept: list[int] = []
    bad: list[str] = []
    for j, name in enumerate(names):
        trial = X[:, kept + [j]]
        if np.linalg.matrix_rank(trial, tol=tol) == len(kept) + 1:
            kept.append(j)
        else:
            bad.append(name)
    return bad


def _group_bounds(groups: np.ndarray) -> list[tuple[int, int]]:
    """(start, end) index pairs of consecutive runs; data must be sorted by group."""
    change = np.flatnonzero(groups[1:] != groups[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [len(groups)]))
    return list(zip(starts.tolist(), ends.tolist(), strict=True))


def _n_clusters(values: np.ndarray) -> int:
    return len(pd.unique(values))


# ===== ESTIMATION =====


def run_regression(data: pd.DataFrame, spec: RegressionSpec) -> RegressionResult:
    """OLS of ``spec.outcome`` on the spec's columns with the spec's covariance.

    HC3 under one-way effects adds the dummies' leverage and equals the
    dummy-variable HC3; under two-way effects it uses the within leverage only.

    Raises:
        RankDeficiencyError: collinear design after demeaning, naming the columns
        InsufficientClustersError: fewer than two clusters in a clustered estimator
        EmptySampleError / PreconditionError: too few observations
    """
    frame = add_interactions(data, spec.interactions)
    names = spec.columns
    needed = [spec.outcome, *names]
    for dim in set(spec.fe) | ({"series", "month"} & set(frame.columns)):
        needed.append(dim)
    missing = [c for c in dict.fromkeys(needed) if c not in frame.columns]
    if missing:
        raise PreconditionError(f"regression data lacks columns {missing}")
    frame = frame.dropna(subset=[spec.outcome, *names])
    sort_keys = [c for c in ("series", "month") if c in frame.columns]
    if sort_keys:
        frame = frame.sort_values(sort_keys, kind="mergesort")
    frame = frame.reset_index(drop=True)
    n = len(frame)
    if n == 0:
        raise EmptySampleError(f"no complete observations for {spec.outcome}")

    transformed = demean(frame, [spec.outcome, *names], spec.fe)
    y = transformed[spec.outcome].to_numpy()
    X = transformed[names].to_numpy()
    terms = list(names)
    if not spec.fe:
        X = np.column_stack([np.ones(n), X])
        terms = ["const", *names]

    scale = np.maximum(np.abs(X).max(axis=0, initial=0.0), 1.0)
    bad = collinear_columns(X / scale, terms, tol=1e-10 * np.sqrt(n))
    if bad:
        raise RankDeficiencyError(bad)
    k = X.shape[1]
    absorbed = _absorbed(frame, spec.fe)
    df_resid = n - k - absorbed
    if df_resid <= 0:
        raise PreconditionError(f"{n} observations cannot identify {k + absorbed} parameters")

    results = sm.OLS(y, X).fit()
    cov, reference, dof, clusters = _covariance(results, frame, spec, df_resid)

    coef = pd.Series(results.params, index=terms)
    se = pd.Series(np.sqrt(np.clip(np.diag(cov), 0.0, None)), index=terms)
    b, s = coef.to_numpy(), se.to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, b / s, np.sign(b) * np.inf)
    t = np.nan_to_num(t, nan=0.0, posinf=np.inf, neginf=-np.inf)
    if reference == "normal":
        p = 2.0 * stats.norm.sf(np.abs(t))
    else:
        p = 2.0 * stats.t.sf(np.abs(t), dof)
    resid = results.resid
    sst = float(np.sum((y - (0.0 if spec.fe else y.mean())) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else np.nan
    return RegressionResult(
        spec=spec,
        coef=coef,
        se=se,
        t=pd.Series(t, index=terms),
        p=pd.Series(p, index=terms),
        cov=pd.DataFrame(cov, index=terms, columns=terms),
        n_obs=n,
        r_squared=r2,
        df_resid=float(dof),
        n_clusters=clusters,
        reference=reference,
    )


def _absorbed(frame: pd.DataFrame, fe: tuple[str, ...]) -> int:
    if not fe:
        return 0
    counts = [_n_clusters(frame[d].to_numpy()) for d in fe]
    return sum(counts) - (len(counts) - 1)


def _hc3_absorbed(results, groups: np.ndarray) -> np.ndarray:
    """HC3 with the absorbed one-way effects' leverage (1/n_g) added to the within leverage.

    Matches HC3 from the equivalent dummy-variable regression. Rows of
    singleton groups have leverage 1 and get zero weight.
    """
    X = results.model.exog
    bread = np.asarray(results.normalized_cov_params)
    codes = pd.factorize(groups)[0]
    sizes = np.bincount(codes)[codes]
    leverage = np.einsum("ij,jk,ik->i", X, bread, X) + 1.0 / sizes
    resid = np.asarray(results.resid)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(leverage < 1.0 - 1e-12, resid / (1.0 - leverage), 0.0)
    xu = X * scaled[:, None]
    return bread @ (xu.T @ xu) @ bread


def _covariance(results, frame: pd.DataFrame, spec: RegressionSpec, df_resid: int):
    est = spec.estimator
    if est == "classic":
        sigma2 = float(results.ssr) / df_resid
        return np.asarray(results.normalized_cov_params) * sigma2, "t", df_resid, ()
    if est == "hc3":
        if len(spec.fe) == 1:
            return _hc3_absorbed(results, frame[spec.fe[0]].to_numpy()), "t", df_resid, ()
        return sw.cov_hc3(results), "t", df_resid, ()
    if est == "nw":
        groups = frame["series"].to_numpy() if "series" in frame.columns else np.zeros(len(frame))
        bounds = _group_bounds(groups)
        longest = max(end - start for start, end in bounds)
        lag = min(spec.nw_lag, longest - 1)
        if lag < spec.nw_lag:
            logger.warning("Newey-West lag capped at %d (longest series has %d rows)", lag, longest)
        if lag == 0:
            return sw.cov_hc0(results), "t", df_resid, ()
        return sw.cov_nw_panel(results, lag, bounds, use_correction=False), "t", df_resid, ()
    if est in ("cluster_time", "cluster_series"):
        column = "month" if est == "cluster_time" else "series"
        group = pd.factorize(frame[column])[0]
        g = _n_clusters(group)
        if g < 2:
            raise InsufficientClustersError(f"{column} clustering needs >= 2 clusters, got {g}")
        cov = sw.cov_cluster(results, group, use_correction=spec.cluster_correction)
        return cov, "t", g - 1, (g,)
    if est == "cluster_twoway":
        g_series = pd.factorize(frame["series"])[0]
        g_month = pd.factorize(frame["month"])[0]
        counts = (_n_clusters(g_series), _n_clusters(g_month))
        if min(counts) < 2:
            raise InsufficientClustersError(f"two-way clustering needs >= 2 clusters per dimension, got {counts}")
        cov = sw.cov_cluster_2groups(results, g_series, g_month, use_correction=spec.cluster_correction)[0]
        return cov, "normal", np.inf, counts
    raise PreconditionError(f"unknown estimator '{est}'")


def inference_sweep(
    data: pd.DataFrame,
    spec: RegressionSpec,
    estimators=("hc3", "nw", "cluster_time", "cluster_series", "cluster_twoway"),
) -> list[RegressionResult]:
    """The same regression under each estimator; point estimates are shared."""
    return [run_regression(data, spec.with_estimator(est)) for est in estimators]


# ===== ROBUSTNESS =====


def clean_regressor(frame: pd.DataFrame, column: str, method: str = "none", fraction: float = 0.01) -> pd.DataFrame:
    """Winsorize, trim, or drop the top tail of one column (pooled quantiles)."""
    if method == "none":
        return frame
    values = frame[column]
    lo, hi = values.quantile(fraction), values.quantile(1.0 - fraction)
    if method == "winsorize":
        out = frame.copy()
        out[column] = values.clip(lo, hi)
        return out
    if method == "trim":
        return frame.loc[values.isna() | values.between(lo, hi)]
    if method == "drop_top":
        return frame.loc[values.isna() | (values <= hi)]
    raise PreconditionError(f"unknown robustness method '{method}'")
