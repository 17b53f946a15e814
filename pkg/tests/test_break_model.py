#!/usr/bin/env python3
"""
pytest test suite for the two-state break model and the mixture likelihood ratio
"""

import itertools

import numpy as np
import pytest
from scipy import special, stats

from factor_mislearning.break_model import (
    BreakParams,
    MixtureLRConfig,
    break_probability_series,
    fit_break_mle,
    hamilton_filter,
    mixture_log_ratio,
    mixture_log_ratio_direct,
    prop2_diagnostics,
)
from factor_mislearning.errors import NumericalError, PreconditionError
from factor_mislearning.simulate import rng_for


def enumerate_paths(f: np.ndarray, params: BreakParams, init: np.ndarray):
    """Log joint density of f with every state path, plus the final state of each path"""
    trans = np.array([[params.p00, 1 - params.p00], [1 - params.p11, params.p11]])
    dens = np.vstack([stats.norm.logpdf(f, params.mu0, params.sd0), stats.norm.logpdf(f, params.mu1, params.sd1)])
    with np.errstate(divide="ignore"):
        log_init, log_trans = np.log(init), np.log(trans)
    logs, last = [], []
    for path in itertools.product((0, 1), repeat=len(f)):
        lp = log_init[path[0]]
        for t, s in enumerate(path):
            if t > 0:
                lp += log_trans[path[t - 1], s]
            lp += dens[s, t]
        logs.append(lp)
        last.append(path[-1])
    return np.array(logs), np.array(last)


def assert_filter_matches_enumeration(f, params, init):
    fit = hamilton_filter(f, params, init)
    for t in range(1, len(f) + 1):
        logs, last = enumerate_paths(f[:t], params, init)
        total = special.logsumexp(logs)
        assert fit.filt_prob[t - 1, 1] == pytest.approx(np.exp(special.logsumexp(logs[last == 1]) - total), abs=1e-9)
        if t == len(f):
            assert fit.loglik == pytest.approx(total, abs=1e-9)


class TestHamiltonFilter:
    """Recursion against brute-force enumeration of state paths"""

    def test_matches_enumeration(self, rng):
        for _ in range(50):
            params = BreakParams(
                rng.normal(0, 0.5), rng.normal(0, 0.5), rng.uniform(0.5, 1.5), rng.uniform(1.5, 3.0),
                rng.uniform(0.6, 0.99), rng.uniform(0.5, 0.95),
            )
            f = rng.normal(0.0, 2.0, 10)
            assert_filter_matches_enumeration(f, params, params.ergodic())

    def test_explicit_initial_distribution(self, rng):
        params = BreakParams(0.0, 0.5, 1.0, 2.0, 0.9, 0.8)
        assert_filter_matches_enumeration(rng.normal(0, 1.5, 8), params, np.array([1.0, 0.0]))

    def test_probabilities_are_distributions(self, rng):
        params = BreakParams(0.0, 0.0, 1.0, 3.0, 0.98, 0.9)
        fit = hamilton_filter(rng.normal(0, 1, 200), params)
        np.testing.assert_allclose(fit.filt_prob.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(fit.pred_prob.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((fit.next_break_prob >= 0) & (fit.next_break_prob <= 1))
        np.testing.assert_allclose(fit.pred_prob[0], params.ergodic())

    def test_next_break_probability(self, rng):
        params = BreakParams(0.0, 0.0, 1.0, 3.0, 0.98, 0.9)
        fit = hamilton_filter(rng.normal(0, 1, 30), params)
        expected = fit.filt_prob[:, 0] * (1 - params.p00) + fit.filt_prob[:, 1] * params.p11
        np.testing.assert_allclose(fit.next_break_prob, expected, atol=1e-12)
        np.testing.assert_allclose(fit.pred_prob[1:, 1], expected[:-1], atol=1e-12)

    def test_predictive_density_integrates_to_one(self, rng):
        params = BreakParams(0.2, -0.5, 0.8, 2.5, 0.95, 0.85)
        f = rng.normal(0.0, 1.5, 60)
        fit = hamilton_filter(f, params)

        # composite Gauss-Legendre over +-10 of the wider state's s.d.
        reach = 10.0 * max(params.sd0, params.sd1)
        edges = np.linspace(min(params.mu0, params.mu1) - reach, max(params.mu0, params.mu1) + reach, 81)
        nodes, weights = np.polynomial.legendre.leggauss(40)
        mid, half = (edges[:-1] + edges[1:]) / 2.0, np.diff(edges) / 2.0
        x = (mid[:, None] + half[:, None] * nodes).ravel()
        w = (half[:, None] * weights).ravel()

        def predictive(t, at):
            calm = stats.norm.pdf(at, params.mu0, params.sd0)
            turbulent = stats.norm.pdf(at, params.mu1, params.sd1)
            return fit.pred_prob[t, 0] * calm + fit.pred_prob[t, 1] * turbulent

        for t in rng.choice(len(f), 5, replace=False):
            assert w @ predictive(t, x) == pytest.approx(1.0, abs=1e-6)
            assert np.log(predictive(t, f[t])) == pytest.approx(fit.logdens[t], abs=1e-10)

    def test_state_labels_do_not_change_likelihood(self, rng):
        params = BreakParams(0.1, -0.4, 1.0, 2.5, 0.95, 0.8)
        f = rng.normal(0.0, 1.5, 100)
        fit, mirrored = hamilton_filter(f, params), hamilton_filter(f, params.swapped())
        assert mirrored.loglik == pytest.approx(fit.loglik, abs=1e-10)
        np.testing.assert_allclose(mirrored.filt_prob, fit.filt_prob[:, ::-1], atol=1e-12)
        np.testing.assert_allclose(mirrored.pred_prob, fit.pred_prob[:, ::-1], atol=1e-12)
        np.testing.assert_allclose(mirrored.logdens, fit.logdens, atol=1e-12)

    def test_zero_density_raises(self):
        params = BreakParams(0.0, 0.0, 1e-200, 1e-200, 0.9, 0.9)
        with pytest.raises(NumericalError):
            hamilton_filter(np.array([1.0, 2.0]), params)

    @pytest.mark.parametrize("init", [[0.3, 0.3], [1.2, -0.2], [1.0]])
    def test_rejects_bad_init(self, init):
        with pytest.raises(PreconditionError):
            hamilton_filter(np.zeros(3), BreakParams(0, 0, 1, 2, 0.9, 0.9), np.array(init))

    def test_probability_series_modes(self, rng):
        fit = hamilton_filter(rng.normal(0, 1, 5), BreakParams(0, 0, 1, 2, 0.9, 0.9))
        assert break_probability_series(fit).tolist() == pytest.approx(fit.filt_prob[:, 1].tolist())
        assert break_probability_series(fit, "predicted_next").tolist() == pytest.approx(fit.next_break_prob.tolist())
        with pytest.raises(PreconditionError):
            break_probability_series(fit, "smoothed")


class TestBreakParams:
    """Parameter validation and labeling"""

    def test_relabel_puts_turbulent_state_second(self):
        params = BreakParams(0.1, -0.2, 3.0, 1.0, 0.7, 0.95).relabeled()
        assert (params.sd0, params.sd1) == (1.0, 3.0)
        assert (params.mu0, params.mu1) == (-0.2, 0.1)
        assert (params.p00, params.p11) == (0.95, 0.7)

    @pytest.mark.parametrize(
        "params",
        [BreakParams(0.1, -0.2, 3.0, 1.0, 0.7, 0.95), BreakParams(0.0, 0.4, 0.5, 2.0, 0.99, 0.6)],
    )
    def test_relabel_ignores_input_labels(self, params):
        assert params.swapped().relabeled() == params.relabeled()
        assert params.swapped().swapped() == params

    def test_ergodic(self):
        pi = BreakParams(0, 0, 1, 3, 0.98, 0.9).ergodic()
        assert pi[1] == pytest.approx(0.02 / 0.12)
        assert BreakParams(0, 0, 1, 3, 1.0, 1.0).ergodic().tolist() == [0.5, 0.5]

    @pytest.mark.parametrize("args", [(0, 0, 0.0, 1, 0.5, 0.5), (0, 0, 1, 1, 1.5, 0.5)])
    def test_invalid(self, args):
        with pytest.raises(PreconditionError):
            BreakParams(*args)


class TestFitBreakMle:
    """Estimation on regime-switching data"""

    def test_recovers_turbulent_state(self, quick_fit_settings):
        rng = rng_for(21, 0)
        sd = np.where((np.arange(600) // 50) % 2 == 1, 3.0, 1.0)
        f = rng.normal(0.0, 1.0, 600) * sd
        fit = fit_break_mle(f, n_starts=quick_fit_settings.break_starts, tol=1e-6)
        assert fit.params.sd1 >= fit.params.sd0
        assert fit.params.sd1 == pytest.approx(3.0, rel=0.2)
        assert fit.params.sd0 == pytest.approx(1.0, rel=0.2)
        # turbulent months carry higher break probabilities
        assert fit.filt_prob[sd == 3.0, 1].mean() > fit.filt_prob[sd == 1.0, 1].mean()

    def test_swapped_start_gives_same_fit(self):
        rng = rng_for(21, 0)
        sd = np.where((np.arange(600) // 50) % 2 == 1, 3.0, 1.0)
        f = rng.normal(0.0, 1.0, 600) * sd
        start = BreakParams(0.0, 0.0, 0.8, 2.5, 0.95, 0.9)
        fit = fit_break_mle(f, tol=1e-6, starts=[start])
        mirrored = fit_break_mle(f, tol=1e-6, starts=[start.swapped()])
        assert fit.params == fit.params.relabeled()
        assert mirrored.params == mirrored.params.relabeled()
        assert mirrored.loglik == pytest.approx(fit.loglik, abs=1e-2)
        np.testing.assert_allclose(
            list(mirrored.params.as_dict().values()), list(fit.params.as_dict().values()), rtol=1e-2, atol=1e-2
        )

    def test_short_series(self):
        with pytest.raises(PreconditionError):
            fit_break_mle(np.arange(20.0), min_obs=48)

    def test_constant_series_is_degenerate(self):
        fit = fit_break_mle(np.zeros(60), min_obs=48)
        assert fit.degenerate
        assert not fit.converged


class TestMixtureLogRatio:
    """Closed form against direct density evaluation"""

    @pytest.mark.parametrize("p_t", [0.001, 0.02, 0.3, 0.9])
    def test_grid_matches_direct(self, p_t):
        cfg = MixtureLRConfig(m=0.1, s_S2=1.2, sigma_J2=0.5, mu_J=1.0, p_t=p_t)
        x = np.linspace(-6.0, 8.0, 10_000)
        _, delta = mixture_log_ratio(cfg, x)
        np.testing.assert_allclose(delta, mixture_log_ratio_direct(cfg, x), rtol=1e-10, atol=1e-12)

    def test_no_break_probability(self):
        cfg = MixtureLRConfig(0.0, 1.0, 0.5, 1.0, 0.0)
        _, delta = mixture_log_ratio(cfg, np.linspace(-3, 3, 11))
        assert np.all(delta == 0.0)

    def test_certain_break(self):
        cfg = MixtureLRConfig(0.0, 1.0, 0.5, 1.0, 1.0)
        g, delta = mixture_log_ratio(cfg, np.linspace(-3, 3, 11))
        np.testing.assert_allclose(delta, g, atol=1e-12)

    @pytest.mark.parametrize("p_t", [0.02, 0.3, 1.0])
    @pytest.mark.parametrize("sigma_J2", [0.0, 0.5])
    def test_increasing_in_jump_evidence(self, p_t, sigma_J2):
        cfg = MixtureLRConfig(m=0.1, s_S2=1.2, sigma_J2=sigma_J2, mu_J=1.0, p_t=p_t)
        # g is linear when sigma_J2 = 0, otherwise convex with its minimum at m - mu_J * s_S2 / sigma_J2
        lo = -6.0 if sigma_J2 == 0.0 else cfg.m - cfg.mu_J * cfg.s_S2 / sigma_J2 + 0.1
        g, delta = mixture_log_ratio(cfg, np.linspace(lo, 8.0, 2000))
        assert np.all(np.diff(g) > 0)
        assert np.all(np.diff(delta) > 0)

    def test_scalar_input(self):
        g, delta = mixture_log_ratio(MixtureLRConfig(0.0, 1.0, 0.0, 0.0, 0.5), 0.3)
        assert isinstance(g, float)
        assert g == pytest.approx(0.0)
        assert delta == pytest.approx(0.0)

    def test_invalid_config(self):
        with pytest.raises(PreconditionError):
            MixtureLRConfig(0.0, 0.0, 0.5, 1.0, 0.1)


class TestSeverityAndRigidity:
    """Slopes of the log ratio at the jump mean"""

    def test_slopes_match_finite_differences(self, rng):
        for _ in range(1000):
            cfg = MixtureLRConfig(
                rng.normal(), rng.uniform(0.1, 2.0), rng.uniform(0.0, 2.0), rng.normal(0.0, 2.0), rng.uniform(0.01, 0.5)
            )
            report = prop2_diagnostics(cfg)
            assert report.dg_dmuJ == pytest.approx(report.dg_dmuJ_numeric, rel=1e-4, abs=1e-6)
            assert report.dg_ds == pytest.approx(report.dg_ds_numeric, rel=1e-4, abs=1e-5)
            assert report.dg_dmuJ >= 0.0
            assert report.sign_consistent

    @pytest.mark.parametrize("mu_J,holds", [(2.0, True), (0.1, False)])
    def test_rigidity_threshold(self, mu_J, holds):
        report = prop2_diagnostics(MixtureLRConfig(0.0, 1.0, 1.0, mu_J, 0.05))
        assert report.rigidity_threshold == pytest.approx(0.5)
        assert report.rigidity_holds is holds
        assert (report.dg_ds < 0) is holds
