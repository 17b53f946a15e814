#!/usr/bin/env python3
"""
pytest test suite for pooled regressions and their covariance estimators
"""

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm
from scipy import stats

from factor_mislearning.errors import (
    EmptySampleError,
    InsufficientClustersError,
    PreconditionError,
    RankDeficiencyError,
)
from factor_mislearning.regress import RegressionSpec, clean_regressor, demean, inference_sweep, run_regression


def panel_data(n_series: int = 6, n_months: int = 30, seed: int = 0, unbalanced: bool = False) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    rows = []
    month_effect = rng.normal(0, 1, n_months)
    for i in range(n_series):
        start = i if unbalanced else 0
        months = pd.period_range("2000-01", periods=n_months, freq="M")[start:]
        x = rng.normal(0, 1, len(months))
        z = rng.normal(0, 1, len(months))
        y = 0.5 * x - 0.2 * z + i * 0.3 + month_effect[start:] + rng.normal(0, 1, len(months))
        rows.append(pd.DataFrame({"series": f"S{i}", "month": months, "x": x, "z": z, "y": y}))
    return pd.concat(rows, ignore_index=True)


def design(frame: pd.DataFrame, columns: list[str]):
    X = np.column_stack([np.ones(len(frame)), frame[columns].to_numpy()])
    y = frame["y"].to_numpy()
    bread = np.linalg.inv(X.T @ X)
    e = y - X @ (bread @ X.T @ y)
    return X, e, bread


def cluster_cov(X: np.ndarray, e: np.ndarray, bread: np.ndarray, groups: np.ndarray) -> np.ndarray:
    meat = np.zeros((X.shape[1], X.shape[1]))
    for g in np.unique(groups):
        s = X[groups == g].T @ e[groups == g]
        meat += np.outer(s, s)
    return bread @ meat @ bread


def assert_cov_close(result, expected: np.ndarray):
    np.testing.assert_allclose(result.cov.to_numpy(), expected, rtol=1e-9, atol=1e-14)


class TestRegressionSpec:
    """Specification validation"""

    @pytest.mark.parametrize(
        "kwargs", [{"estimator": "ols"}, {"nw_lag": -1}, {"fe": ("industry",)}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(PreconditionError):
            RegressionSpec("y", **kwargs)

    def test_columns_keep_order_without_duplicates(self):
        spec = RegressionSpec("y", ("x",), controls=("z", "x"), interactions=(("x", "z"),))
        assert spec.columns == ["x", "x:z", "z"]


class TestPointEstimates:
    """Coefficients, fit and sample handling"""

    def test_exact_fit(self):
        frame = pd.DataFrame({"x": np.arange(10.0), "y": 1.0 + 2.0 * np.arange(10.0)})
        result = run_regression(frame, RegressionSpec("y", ("x",), estimator="classic"))
        assert result.coef["const"] == pytest.approx(1.0)
        assert result.coef["x"] == pytest.approx(2.0)
        assert result.r_squared == pytest.approx(1.0)

    def test_matches_statsmodels(self):
        frame = panel_data()
        result = run_regression(frame, RegressionSpec("y", ("x", "z"), estimator="classic"))
        ols = sm.OLS(frame["y"], sm.add_constant(frame[["x", "z"]])).fit()
        np.testing.assert_allclose(result.coef.to_numpy(), ols.params.to_numpy(), rtol=1e-10)
        np.testing.assert_allclose(result.se.to_numpy(), ols.bse.to_numpy(), rtol=1e-10)
        assert result.r_squared == pytest.approx(ols.rsquared)
        assert result.p["x"] == pytest.approx(ols.pvalues["x"])

    def test_interaction_column(self):
        frame = panel_data()
        result = run_regression(frame, RegressionSpec("y", ("x",), controls=("z",), interactions=(("x", "z"),)))
        assert list(result.coef.index) == ["const", "x", "x:z", "z"]
        assert set(result.to_frame()["term"]) == {"const", "x", "x:z", "z"}

    def test_missing_rows_dropped(self):
        frame = panel_data()
        frame.loc[:4, "x"] = np.nan
        assert run_regression(frame, RegressionSpec("y", ("x",))).n_obs == len(frame) - 5

    def test_missing_column(self):
        with pytest.raises(PreconditionError):
            run_regression(panel_data(), RegressionSpec("y", ("w",)))

    def test_no_complete_rows(self):
        frame = panel_data()
        frame["x"] = np.nan
        with pytest.raises(EmptySampleError):
            run_regression(frame, RegressionSpec("y", ("x",)))

    def test_collinear_design_names_columns(self):
        frame = panel_data()
        frame["x2"] = 2.0 * frame["x"]
        with pytest.raises(RankDeficiencyError) as info:
            run_regression(frame, RegressionSpec("y", ("x", "x2")))
        assert info.value.columns == ["x2"]

    def test_regressor_absorbed_by_fixed_effect(self):
        frame = panel_data()
        frame["level"] = frame["series"].str[1:].astype(float)
        with pytest.raises(RankDeficiencyError) as info:
            run_regression(frame, RegressionSpec("y", ("x", "level"), fe=("series",)))
        assert info.value.columns == ["level"]


class TestFixedEffects:
    """Within estimates against dummy-variable OLS"""

    @pytest.mark.parametrize("fe", [("series",), ("month",), ("series", "month")])
    def test_matches_dummies(self, fe):
        frame = panel_data(unbalanced=True)
        result = run_regression(frame, RegressionSpec("y", ("x", "z"), fe=fe, estimator="classic"))
        dummies = pd.get_dummies(frame[list(fe)].astype(str), drop_first=False, dtype=float)
        if len(fe) == 2:
            dummies = dummies.drop(columns=dummies.columns[-1])
        X = np.column_stack([frame[["x", "z"]].to_numpy(), dummies.to_numpy()])
        ols = sm.OLS(frame["y"].to_numpy(), X).fit()
        np.testing.assert_allclose(result.coef.to_numpy(), ols.params[:2], rtol=1e-7)
        np.testing.assert_allclose(result.se.to_numpy(), ols.bse[:2], rtol=1e-7)

    @pytest.mark.parametrize("fe", [("series",), ("month",)])
    def test_hc3_matches_dummies(self, fe):
        # balanced, so no singleton months
        frame = panel_data()
        result = run_regression(frame, RegressionSpec("y", ("x", "z"), fe=fe, estimator="hc3"))
        dummies = pd.get_dummies(frame[list(fe)].astype(str), dtype=float)
        X = np.column_stack([frame[["x", "z"]].to_numpy(), dummies.to_numpy()])
        ols = sm.OLS(frame["y"].to_numpy(), X).fit()
        np.testing.assert_allclose(result.cov.to_numpy(), ols.cov_HC3[:2, :2], rtol=1e-7)
        # the within leverage alone understates the variance
        within = demean(frame, ["y", "x", "z"], fe)
        within_hc3 = sm.OLS(within["y"].to_numpy(), within[["x", "z"]].to_numpy()).fit().cov_HC3
        assert np.all(np.diag(result.cov.to_numpy()) > np.diag(within_hc3))

    def test_demean_one_way(self):
        frame = pd.DataFrame({"series": ["a", "a", "b", "b"], "v": [1.0, 3.0, 10.0, 14.0]})
        assert demean(frame, ["v"], ("series",))["v"].tolist() == [-1.0, 1.0, -2.0, 2.0]


class TestCovarianceEstimators:
    """Sandwich estimators against hand-built oracles"""

    def test_hc3(self):
        frame = panel_data()
        X, e, bread = design(frame, ["x", "z"])
        leverage = np.einsum("ij,jk,ik->i", X, bread, X)
        meat = (X * (e / (1 - leverage))[:, None] ** 2).T @ X
        assert_cov_close(run_regression(frame, RegressionSpec("y", ("x", "z"), estimator="hc3")), bread @ meat @ bread)

    def test_newey_west_lag0_is_hc0(self):
        frame = panel_data()
        X, e, bread = design(frame, ["x"])
        hc0 = bread @ (X * e[:, None] ** 2).T @ X @ bread
        assert_cov_close(run_regression(frame, RegressionSpec("y", ("x",), estimator="nw", nw_lag=0)), hc0)

    def test_newey_west_lag1(self):
        frame = panel_data(n_series=1, n_months=60)
        X, e, bread = design(frame, ["x"])
        xe = X * e[:, None]
        gamma1 = xe[1:].T @ xe[:-1]
        meat = xe.T @ xe + 0.5 * (gamma1 + gamma1.T)
        assert_cov_close(run_regression(frame, RegressionSpec("y", ("x",), estimator="nw", nw_lag=1)), bread @ meat @ bread)

    def test_newey_west_lags_stay_within_series(self):
        frame = panel_data(n_series=3, n_months=20)
        X, e, bread = design(frame, ["x"])
        xe = X * e[:, None]
        meat = xe.T @ xe
        for g in range(3):
            block = xe[g * 20 : (g + 1) * 20]
            gamma1 = block[1:].T @ block[:-1]
            meat += 0.5 * (gamma1 + gamma1.T)
        assert_cov_close(run_regression(frame, RegressionSpec("y", ("x",), estimator="nw", nw_lag=1)), bread @ meat @ bread)

    def test_newey_west_lag_capped(self):
        frame = panel_data(n_series=2, n_months=10)
        capped = run_regression(frame, RegressionSpec("y", ("x",), estimator="nw", nw_lag=50))
        exact = run_regression(frame, RegressionSpec("y", ("x",), estimator="nw", nw_lag=9))
        np.testing.assert_allclose(capped.cov.to_numpy(), exact.cov.to_numpy())

    def test_singleton_clusters(self):
        frame = panel_data(n_series=1, n_months=40)
        frame["series"] = [f"S{i}" for i in range(len(frame))]
        X, e, bread = design(frame, ["x"])
        hc0 = bread @ (X * e[:, None] ** 2).T @ X @ bread
        plain = run_regression(frame, RegressionSpec("y", ("x",), estimator="cluster_series", cluster_correction=False))
        assert_cov_close(plain, hc0)
        corrected = run_regression(frame, RegressionSpec("y", ("x",), estimator="cluster_series"))
        n, k = X.shape
        assert_cov_close(corrected, hc0 * n / (n - k))

    @pytest.mark.parametrize("estimator,column", [("cluster_series", "series"), ("cluster_time", "month")])
    def test_one_way_cluster(self, estimator, column):
        frame = panel_data()
        X, e, bread = design(frame, ["x"])
        groups = frame[column].astype(str).to_numpy()
        g, n, k = len(np.unique(groups)), len(frame), X.shape[1]
        expected = cluster_cov(X, e, bread, groups) * g / (g - 1) * (n - 1) / (n - k)
        result = run_regression(frame, RegressionSpec("y", ("x",), estimator=estimator))
        assert_cov_close(result, expected)
        assert result.df_resid == g - 1
        assert result.p["x"] == pytest.approx(2 * stats.t.sf(abs(result.t["x"]), g - 1))

    def test_two_way_cluster(self):
        frame = panel_data()
        X, e, bread = design(frame, ["x"])
        series = frame["series"].to_numpy()
        months = frame["month"].astype(str).to_numpy()
        pairs = np.array([f"{s}|{m}" for s, m in zip(series, months, strict=True)])
        expected = cluster_cov(X, e, bread, series) + cluster_cov(X, e, bread, months) - cluster_cov(X, e, bread, pairs)
        result = run_regression(frame, RegressionSpec("y", ("x",), estimator="cluster_twoway", cluster_correction=False))
        assert_cov_close(result, expected)
        assert result.reference == "normal"
        assert result.n_clusters == (6, 30)
        assert result.p["x"] == pytest.approx(2 * stats.norm.sf(abs(result.t["x"])))

    @pytest.mark.parametrize("estimator", ["cluster_time", "cluster_twoway"])
    def test_insufficient_clusters(self, estimator):
        frame = panel_data(n_months=1, n_series=30)
        with pytest.raises(InsufficientClustersError):
            run_regression(frame, RegressionSpec("y", ("x",), estimator=estimator))

    def test_sweep_shares_point_estimates(self):
        frame = panel_data()
        results = inference_sweep(frame, RegressionSpec("y", ("x", "z"), nw_lag=3))
        assert [r.spec.estimator for r in results] == ["hc3", "nw", "cluster_time", "cluster_series", "cluster_twoway"]
        for result in results[1:]:
            pd.testing.assert_series_equal(result.coef, results[0].coef)
        assert len({round(r.se["x"], 12) for r in results}) == len(results)


class TestCleanRegressor:
    """Tail treatments of the key regressor"""

    @pytest.fixture
    def frame(self):
        return pd.DataFrame({"delta": np.arange(101, dtype=float), "y": 0.0})

    def test_none_is_identity(self, frame):
        assert clean_regressor(frame, "delta") is frame

    def test_winsorize(self, frame):
        out = clean_regressor(frame, "delta", "winsorize", 0.05)
        assert (out["delta"].min(), out["delta"].max()) == (5.0, 95.0)
        assert len(out) == 101

    def test_trim(self, frame):
        out = clean_regressor(frame, "delta", "trim", 0.05)
        assert (out["delta"].min(), out["delta"].max(), len(out)) == (5.0, 95.0, 91)

    def test_drop_top(self, frame):
        out = clean_regressor(frame, "delta", "drop_top", 0.05)
        assert (out["delta"].min(), len(out)) == (0.0, 96)

    def test_unknown_method(self, frame):
        with pytest.raises(PreconditionError):
            clean_regressor(frame, "delta", "shrink")
