#!/usr/bin/env python3
"""
pytest test suite for the simulated learning economy
"""

import numpy as np
import pytest

from factor_mislearning.errors import ConfigError, PreconditionError
from factor_mislearning.simulate import (
    Beliefs,
    EquilibriumConfig,
    JumpSweep,
    PostBreakExperiment,
    SimPath,
    SweepConfig,
    TrueProcessConfig,
    _draw_jump_free_window,
    closed_form_error,
    corollary1_check,
    entropy_rate_check,
    equilibrium_identities,
    gain_monotonicity_check,
    innovation_whiteness,
    jump_frequency_check,
    monte_carlo_post_break_errors,
    post_break_error_path,
    rng_for,
    run_misspecified_filter,
    simulate_equilibrium,
    simulate_jump_sweep,
    simulate_true_process,
    steady_state_init,
    wedge_closed_form,
)


def single_jump_path(A: float, T: int, t_star: int, size: float) -> SimPath:
    """Noise-free premium path with one jump and no observation noise"""
    lam = np.where(np.arange(1, T + 1) >= t_star, size * A ** (np.arange(1, T + 1) - t_star), 0.0)
    jumps = np.zeros(T)
    jumps[t_star - 1] = size
    zeros = np.zeros(T)
    return SimPath(lam=lam, f=lam.copy(), u=zeros, eta=zeros, jumps=jumps, jump_times=(t_star,), jump_sizes={t_star: size})


class TestTrueProcess:
    """Path generation"""

    def test_deterministic_per_seed_and_index(self):
        cfg = TrueProcessConfig(0.9, 0.1, 1.0, 0.05, 1.0, 0.5, 200, seed=11)
        a, b = simulate_true_process(cfg, 3), simulate_true_process(cfg, 3)
        np.testing.assert_array_equal(a.f, b.f)
        assert a.jump_times == b.jump_times
        assert not np.array_equal(a.f, simulate_true_process(cfg, 4).f)

    def test_noise_free_decay(self):
        path = simulate_true_process(TrueProcessConfig(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 5, lambda0=1.0))
        np.testing.assert_allclose(path.lam, 0.5 ** np.arange(1, 6))
        np.testing.assert_array_equal(path.f, path.lam)
        assert path.jump_times == ()

    def test_jumps_every_period(self):
        path = simulate_true_process(TrueProcessConfig(0.5, 0.0, 0.0, 1.0, 1.0, 0.0, 4))
        np.testing.assert_allclose(path.lam, [1.0, 1.5, 1.75, 1.875])
        assert path.jump_times == (1, 2, 3, 4)
        assert path.jump_sizes[2] == 1.0

    def test_frame_columns(self):
        frame = simulate_true_process(TrueProcessConfig(0.9, 0.1, 1.0, 0.1, 1.0, 0.0, 10)).to_frame()
        assert list(frame.columns) == ["t", "lambda", "f", "u", "jump"]
        assert frame["t"].tolist() == list(range(1, 11))

    @pytest.mark.parametrize(
        "kwargs", [{"A": 1.0}, {"sigma_u": -1.0}, {"p": 1.5}],
    )
    def test_invalid_config(self, kwargs):
        base = {"A": 0.9, "sigma_eta": 0.1, "sigma_u": 1.0, "p": 0.02, "mu_J": 1.0, "sigma_J": 0.5, "T": 10}
        with pytest.raises(ConfigError):
            TrueProcessConfig(**(base | kwargs))

    def test_jump_frequency(self):
        path = simulate_true_process(TrueProcessConfig(0.9, 0.1, 1.0, 0.02, 1.0, 0.5, 20_000, seed=5))
        report = jump_frequency_check(path, 0.02)
        assert report.count == len(path.jump_times)
        assert report.passes
        assert jump_frequency_check(path, 0.2).passes is False


class TestMisspecifiedFilter:
    """Belief updating under a jump-free model"""

    def test_whiteness_under_correct_model(self):
        path = simulate_true_process(TrueProcessConfig(0.9, 0.3, 1.0, 0.0, 0.0, 0.0, 5000, seed=2))
        trace = run_misspecified_filter(path, 0.3, 0.9, 1.0, steady_state_init(0.9, 0.3, 1.0))
        assert innovation_whiteness(trace).passes

    def test_underreaction_leaves_autocorrelated_innovations(self):
        path = simulate_true_process(TrueProcessConfig(0.95, 0.5, 1.0, 0.0, 0.0, 0.0, 5000, seed=2))
        trace = run_misspecified_filter(path, 0.01, 0.95, 1.0, steady_state_init(0.95, 0.01, 1.0))
        report = innovation_whiteness(trace)
        assert report.autocorr > report.bound

    def test_steady_state_init_keeps_gain_constant(self):
        path = simulate_true_process(TrueProcessConfig(0.9, 0.1, 1.0, 0.0, 0.0, 0.0, 50))
        trace = run_misspecified_filter(path, 0.1, 0.9, 1.0, steady_state_init(0.9, 0.1, 1.0))
        np.testing.assert_allclose(trace.gain, trace.gain[0], atol=1e-10)

    def test_negative_belief(self):
        path = simulate_true_process(TrueProcessConfig(0.9, 0.1, 1.0, 0.0, 0.0, 0.0, 10))
        with pytest.raises(PreconditionError):
            run_misspecified_filter(path, -0.1, 0.9, 1.0)


class TestPostBreakErrors:
    """Belief errors after a break"""

    def test_realized_errors_follow_closed_form(self):
        path = single_jump_path(0.9, 40, 10, 1.0)
        trace = run_misspecified_filter(path, 0.1, 0.9, 1.0, steady_state_init(0.9, 0.1, 1.0))
        errors = post_break_error_path(path, trace, 10, 15)
        expected = closed_form_error(0.9, trace.gain[-1], 1.0, 0.0, np.arange(16))
        np.testing.assert_allclose(errors, expected, atol=1e-10)
        # beliefs lag the jump, so the error starts negative and shrinks
        assert errors[0] < 0
        assert np.all(np.diff(np.abs(errors)) < 0)

    def test_closed_form_values(self):
        # phi = 0.72; e_h = 0.72^(h+1) * 0.5 - 0.72^h * 0.8 * 2
        h = np.array([0, 1, 2])
        np.testing.assert_allclose(closed_form_error(0.9, 0.2, 2.0, 0.5, h), 0.72 ** (h + 1) * 0.5 - 0.72**h * 1.6)

    @pytest.mark.parametrize(
        "t_star,h_max,message",
        [(11, 5, "not a jump time"), (10, 40, "past the end")],
    )
    def test_window_errors(self, t_star, h_max, message):
        path = single_jump_path(0.9, 40, 10, 1.0)
        trace = run_misspecified_filter(path, 0.1, 0.9, 1.0)
        with pytest.raises(PreconditionError, match=message):
            post_break_error_path(path, trace, t_star, h_max)

    def test_later_jump_inside_window(self):
        path = single_jump_path(0.9, 40, 10, 1.0)
        path.jump_times = (10, 14)
        trace = run_misspecified_filter(path, 0.1, 0.9, 1.0)
        with pytest.raises(PreconditionError, match="further jumps"):
            post_break_error_path(path, trace, 10, 5)

    def test_monte_carlo_matches_closed_form(self):
        report = monte_carlo_post_break_errors(PostBreakExperiment(e_prev=0.3, n_paths=20_000, seed=1))
        assert report.passes
        assert list(report.to_frame().columns) == ["h", "mean", "se", "closed_form", "z"]
        assert report.rejected == 0

    def test_jump_free_windows_are_redrawn(self):
        report = monte_carlo_post_break_errors(PostBreakExperiment(p=0.05, n_paths=2_000, seed=1))
        assert report.rejected > 0

    def test_accepted_windows_match_no_jump_closed_form(self):
        report = monte_carlo_post_break_errors(PostBreakExperiment(p=0.2, e_prev=0.3, n_paths=20_000, seed=2))
        assert report.rejected > 0
        assert report.passes

    def test_accepted_windows_carry_no_jumps(self):
        hits, rejected = _draw_jump_free_window(rng_for(5, 0), 500, 8, 0.1)
        assert hits.shape == (500, 8)
        assert not hits.any()
        assert rejected > 0

    def test_certain_jumps_cannot_be_conditioned_away(self):
        with pytest.raises(PreconditionError):
            monte_carlo_post_break_errors(PostBreakExperiment(p=1.0, n_paths=10))

    @pytest.mark.slow
    def test_full_monte_carlo(self):
        assert monte_carlo_post_break_errors(PostBreakExperiment(n_paths=100_000, seed=7)).passes

    def test_gain_monotonicity(self):
        report = gain_monotonicity_check(np.linspace(0.01, 0.5, 10), 0.9, 1.0)
        assert report.gains_increasing
        assert report.persistence_decreasing

    @pytest.mark.parametrize("grid", [[], [0.2, 0.1], [-0.1, 0.2]])
    def test_gain_grid_validation(self, grid):
        with pytest.raises(PreconditionError):
            gain_monotonicity_check(grid, 0.9, 1.0)


class TestEquilibrium:
    """Market clearing and the belief wedge"""

    @pytest.fixture
    def shifted(self):
        return EquilibriumConfig(gamma=2.0, sigma_u=0.2, shift_times=(50,), shift_sizes=(1.0,), T=120, noise=False)

    def test_identities_hold(self, shifted):
        frame = simulate_equilibrium(shifted, Beliefs())
        assert equilibrium_identities(frame, shifted).passes(1e-12)

    def test_identities_hold_with_noise(self):
        cfg = EquilibriumConfig(gamma=2.0, sigma_u=0.2, supply_sd=0.3, shift_times=(30,), shift_sizes=(0.5,), T=100, seed=4)
        frame = simulate_equilibrium(cfg, Beliefs(sigma_eta=0.05))
        assert equilibrium_identities(frame, cfg).passes(1e-12)

    def test_wedge_decays_as_predicted(self, shifted):
        frame = simulate_equilibrium(shifted, Beliefs())
        wedge = frame["wedge"].to_numpy()
        np.testing.assert_allclose(wedge[49:70], wedge_closed_form(shifted, Beliefs(), 50, 1.0, 20), atol=1e-9)
        assert np.all(wedge[:49] == 0.0)
        assert wedge[49] > 0

    def test_correct_beliefs_have_no_wedge(self, shifted):
        frame = simulate_equilibrium(shifted, Beliefs(correct=True))
        assert np.all(frame["wedge"] == 0.0)
        np.testing.assert_array_equal(frame["m_T"], frame["m_S"])

    def test_shift_outside_sample(self):
        cfg = EquilibriumConfig(gamma=2.0, sigma_u=0.2, shift_times=(500,), shift_sizes=(1.0,), T=100)
        with pytest.raises(ConfigError):
            simulate_equilibrium(cfg, Beliefs())

    def test_shift_sizes_must_match(self):
        with pytest.raises(ConfigError):
            EquilibriumConfig(gamma=2.0, sigma_u=0.2, shift_times=(5, 6), shift_sizes=(1.0,))


class TestJumpSweep:
    """Onset log ratio against the later correction"""

    def test_larger_jumps_correct_more(self):
        sweep = simulate_jump_sweep(SweepConfig(replications=2_000, seed=3))
        report = corollary1_check(sweep)
        assert report.passes
        assert report.rank_corr > 0
        assert report.mean_increasing

    def test_insufficient_sample(self):
        sweep = JumpSweep(np.array([0.1, 0.2]), np.array([0.0, 1.0]), np.array([0.3, 0.4]), 12)
        report = corollary1_check(sweep)
        assert report.insufficient_sample
        assert not report.passes
        assert np.isnan(report.rank_corr)

    def test_horizon_mismatch(self):
        sweep = JumpSweep(np.zeros(3), np.zeros(3), np.zeros(3), 12)
        with pytest.raises(PreconditionError):
            corollary1_check(sweep, h=6)


class TestEntropyRate:
    """Average predictive log-likelihood of a correct filter"""

    def test_matches_gaussian_entropy(self):
        report = entropy_rate_check(0.9, 0.3, 1.0, T=100_000, seed=0)
        assert report.passes()
        assert abs(report.z) < 2.0
        assert report.mean_loglik < 0
