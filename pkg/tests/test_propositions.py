#!/usr/bin/env python3
"""
pytest test suite for the simulation check suite
"""

import pandas as pd
import pytest

from factor_mislearning.config import SimulateSettings
from factor_mislearning.propositions import (
    REPORT_COLUMNS,
    SpikeExperiment,
    delta_spike_experiment,
    run_proposition_suite,
    simulated_paths,
)

# checks with no sampling error
EXACT_CHECKS = ("riccati_fixed_point", "gain_monotonicity", "mixture_log_ratio_grid", "market_clearing", "wedge_decay")


@pytest.fixture
def small_settings():
    """Fewer Monte Carlo draws so the suite runs in seconds"""
    return SimulateSettings(mc_paths=20_000, replications=2_000, spike_paths=20)


class TestPropositionSuite:
    """Report frame produced by the simulate subcommand"""

    def test_report_shape(self, small_settings):
        report = run_proposition_suite(small_settings, seed=3, threads=2)
        assert list(report.columns) == REPORT_COLUMNS
        assert report["check"].is_unique
        assert set(report["status"]) <= {"PASS", "FAIL"}
        horizons = [c for c in report["check"] if c.startswith("post_break_error_h")]
        assert horizons == ["post_break_error_h0", "post_break_error_h1", "post_break_error_h5", "post_break_error_h10"]

    def test_exact_checks_pass(self, small_settings):
        report = run_proposition_suite(small_settings, seed=3).set_index("check")
        for check in EXACT_CHECKS:
            assert report.loc[check, "status"] == "PASS", report.loc[check, "detail"]

    @pytest.mark.slow
    def test_default_settings_pass(self):
        report = run_proposition_suite(SimulateSettings(), seed=42, threads=4)
        failed = report.loc[report["status"] == "FAIL", "check"].tolist()
        assert failed == []

    @pytest.mark.slow
    def test_deterministic_for_seed(self, small_settings):
        a = run_proposition_suite(small_settings, seed=9, threads=1)
        b = run_proposition_suite(small_settings, seed=9, threads=4)
        pd.testing.assert_frame_equal(a, b)


class TestDeltaSpikes:
    """Delta at a large break against its pre-break tail"""

    def test_thread_count_does_not_matter(self):
        exp = SpikeExperiment(n_paths=12, seed=1)
        one, many = delta_spike_experiment(exp, threads=1), delta_spike_experiment(exp, threads=3)
        assert one.hits == many.hits
        assert one.rate == one.hits / 12

    @pytest.mark.slow
    def test_spike_rate(self):
        assert delta_spike_experiment(SpikeExperiment(n_paths=500, seed=42), threads=4).passes


class TestSimulatedPaths:
    """Plot data for one simulated path"""

    def test_columns(self):
        frame = simulated_paths(SimulateSettings(T=50), seed=1)
        assert list(frame.columns) == ["t", "lambda", "f", "u", "jump", "lambda_hat", "post_var", "gain", "error"]
        assert len(frame) == 50
        assert (frame["error"] == frame["lambda_hat"] - frame["lambda"]).all()
