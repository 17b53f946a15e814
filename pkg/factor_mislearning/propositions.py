"""
Simulation checks of the learning model's analytical results.

Each check returns one report row (check, statistic, target, tolerance,
status, detail); ``run_proposition_suite`` collects them for the
``simulate`` subcommand.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import signal

from .break_model import (
    BreakParams,
    MixtureLRConfig,
    hamilton_filter,
    mixture_log_ratio,
    mixture_log_ratio_direct,
    prop2_diagnostics,
)
from .config import DEFAULT_SEED, DEFAULT_SPIKE_PATHS, DEFAULT_THREADS, SimulateSettings
from .mislearning import compute_delta
from .parallel import map_ordered
from .simulate import (
    Beliefs,
    EquilibriumConfig,
    PostBreakExperiment,
    SweepConfig,
    TrueProcessConfig,
    corollary1_check,
    entropy_rate_check,
    equilibrium_identities,
    gain_monotonicity_check,
    innovation_whiteness,
    jump_frequency_check,
    monte_carlo_post_break_errors,
    rng_for,
    run_misspecified_filter,
    simulate_equilibrium,
    simulate_jump_sweep,
    simulate_true_process,
    steady_state_init,
    wedge_closed_form,
)
from .stable_filter import StableParams, kalman_filter, steady_state_gain

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["check", "statistic", "target", "tolerance", "status", "detail"]

ENTROPY_DRAWS = 100_000
ENTROPY_SE_BOUND = 2.0


def _row(check: str, statistic: float, target: float, tolerance: float, passed: bool, detail: str) -> dict:
    return {
        "check": check,
        "statistic": float(statistic),
        "target": float(target),
        "tolerance": float(tolerance),
        "status": "PASS" if passed else "FAIL",
        "detail": detail,
    }


# ===== DELTA SPIKES =====


@dataclass(frozen=True)
class SpikeExperiment:
    """Single break of ``jump_sd`` observation s.d. at ``t_star`` in an otherwise stable path."""

    n_paths: int = DEFAULT_SPIKE_PATHS
    T: int = 240
    t_star: int = 200
    jump_sd: float = 4.0
    window: int = 3
    quantile: float = 0.99
    stable: StableParams = StableParams(rho=0.9, sigma_u=1.0, sigma_eta=0.1)
    brk: BreakParams = BreakParams(mu0=0.0, mu1=0.0, sd0=1.0, sd1=3.0, p00=0.98, p11=0.9)
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class SpikeReport:
    n_paths: int
    hits: int
    required_rate: float = 0.95

    @property
    def rate(self) -> float:
        return self.hits / self.n_paths if self.n_paths else 0.0

    @property
    def passes(self) -> bool:
        return self.rate >= self.required_rate


def _spike_path(job: tuple[SpikeExperiment, int]) -> bool:
    exp, index = job
    rng = rng_for(exp.seed, index)
    p = exp.stable
    shocks = rng.normal(0.0, p.sigma_eta, exp.T)
    shocks[exp.t_star - 1] += exp.jump_sd * p.sigma_u
    lam = signal.lfilter([1.0], [1.0, -p.rho], shocks)
    f = pd.Series(lam + rng.normal(0.0, p.sigma_u, exp.T))
    init = steady_state_init(p.rho, p.sigma_eta, p.sigma_u)
    delta = compute_delta(kalman_filter(f, p, init), hamilton_filter(f, exp.brk)).to_numpy()
    before = delta[: exp.t_star - 1]
    after = delta[exp.t_star - 1 : exp.t_star - 1 + exp.window]
    return bool(after.max() > np.quantile(before, exp.quantile))


def delta_spike_experiment(exp: SpikeExperiment, threads: int = DEFAULT_THREADS) -> SpikeReport:
    """Share of paths whose post-break delta exceeds the pre-break tail quantile."""
    hits = map_ordered(_spike_path, [(exp, i) for i in range(exp.n_paths)], threads=threads)
    return SpikeReport(exp.n_paths, int(sum(hits)))


# ===== SUITE =====


def _riccati_row(s: SimulateSettings) -> dict:
    ss = steady_state_gain(s.A, s.believed_sigma_eta, s.sigma_u)
    p = ss.p_pred
    residual = abs(s.A**2 * (p - p * p / (p + s.sigma_u**2)) + s.believed_sigma_eta**2 - p)
    return _row(
        "riccati_fixed_point",
        residual,
        0.0,
        1e-10,
        ss.converged and residual <= 1e-10,
        f"K={ss.gain:.6f} after {ss.iterations} iterations",
    )


def _process_rows(s: SimulateSettings, seed: int) -> list[dict]:
    cfg = TrueProcessConfig(s.A, s.sigma_eta, s.sigma_u, s.p, s.mu_J, s.sigma_J, s.T, seed, s.lambda0)
    freq = jump_frequency_check(simulate_true_process(cfg), s.p)
    calm = TrueProcessConfig(s.A, s.sigma_eta, s.sigma_u, 0.0, 0.0, 0.0, s.T, seed, s.lambda0)
    path = simulate_true_process(calm, index=1)
    trace = run_misspecified_filter(path, s.sigma_eta, s.A, s.sigma_u, steady_state_init(s.A, s.sigma_eta, s.sigma_u))
    white = innovation_whiteness(trace)
    entropy = entropy_rate_check(s.A, s.sigma_eta, s.sigma_u, T=ENTROPY_DRAWS, seed=seed)
    return [
        _row("jump_frequency", freq.z, 0.0, 3.0, freq.passes, f"{freq.count} jumps in {s.T} periods"),
        _row("innovation_whiteness", white.autocorr, 0.0, white.bound, white.passes, "lag-1 autocorrelation"),
        _row(
            "entropy_rate",
            entropy.z,
            0.0,
            ENTROPY_SE_BOUND,
            entropy.passes(ENTROPY_SE_BOUND),
            f"mean loglik {entropy.mean_loglik:.5f} vs {entropy.target:.5f}",
        ),
    ]


def _post_break_rows(s: SimulateSettings, seed: int) -> list[dict]:
    exp = PostBreakExperiment(
        A=s.post_break_A,
        gain=s.post_break_gain,
        jump=1.0,
        sigma_eta=s.sigma_eta,
        sigma_u=s.sigma_u,
        p=s.p,
        horizons=s.horizons,
        n_paths=s.mc_paths,
        seed=seed,
    )
    report = monte_carlo_post_break_errors(exp)
    rows = [
        _row(
            f"post_break_error_h{h}",
            z,
            0.0,
            3.0,
            abs(z) <= 3.0,
            f"mean {m:.5f} vs closed form {c:.5f}",
        )
        for h, z, m, c in zip(report.horizons, report.z, report.mean, report.closed_form, strict=True)
    ]
    grid = np.linspace(0.01, 0.5, 10) * s.sigma_u
    gains = gain_monotonicity_check(grid, s.A, s.sigma_u)
    rows.append(
        _row(
            "gain_monotonicity",
            float(np.min(np.diff(gains.gains))),
            0.0,
            0.0,
            gains.gains_increasing and gains.persistence_decreasing,
            "steady-state gain rises and |(1-K)A| falls with believed state volatility",
        )
    )
    return rows


def _mixture_rows(seed: int, n_grid: int = 10_000, n_slopes: int = 1_000) -> list[dict]:
    rng = rng_for(seed, 7)
    worst = 0.0
    for _ in range(n_grid):
        cfg = MixtureLRConfig(
            m=rng.uniform(-1.0, 1.0),
            s_S2=rng.uniform(0.5, 4.0),
            sigma_J2=rng.uniform(0.0, 4.0),
            mu_J=rng.uniform(-3.0, 3.0),
            p_t=rng.uniform(0.0, 1.0),
        )
        x = cfg.m + rng.uniform(-4.0, 4.0)
        _, delta = mixture_log_ratio(cfg, x)
        direct = float(mixture_log_ratio_direct(cfg, x))
        worst = max(worst, abs(delta - direct) / max(1.0, abs(direct)))

    slope_ok, sign_ok = 0, 0
    for _ in range(n_slopes):
        cfg = MixtureLRConfig(
            m=0.0,
            s_S2=rng.uniform(0.2, 4.0),
            sigma_J2=rng.uniform(0.0, 4.0),
            mu_J=rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 3.0),
            p_t=rng.uniform(0.01, 0.5),
        )
        report = prop2_diagnostics(cfg)
        slope_ok += report.dg_dmuJ_numeric > 0
        sign_ok += report.sign_consistent
    return [
        _row("mixture_log_ratio_grid", worst, 0.0, 1e-12, worst <= 1e-12, f"{n_grid} grid points"),
        _row("severity_slope_positive", slope_ok / n_slopes, 1.0, 0.0, slope_ok == n_slopes, "d g / d |mu_J| > 0"),
        _row(
            "rigidity_sign",
            sign_ok / n_slopes,
            1.0,
            0.0,
            sign_ok == n_slopes,
            "sign of d g / d s matches mu_J^2 vs sigma_J^2 s / (s + sigma_J^2)",
        ),
    ]


def _equilibrium_rows(s: SimulateSettings, seed: int) -> list[dict]:
    beliefs = Beliefs(A=s.A, sigma_eta=s.sigma_eta, believed_sigma_eta=s.believed_sigma_eta)
    noisy = EquilibriumConfig(
        s.gamma, s.eq_sigma_u, s.supply_bar, s.supply_sd, (s.supply_shift_time,), (s.supply_shift_size,), s.T, seed
    )
    identities = equilibrium_identities(simulate_equilibrium(noisy, beliefs), noisy)

    quiet = EquilibriumConfig(
        s.gamma, s.eq_sigma_u, s.supply_bar, 0.0, (s.supply_shift_time,), (s.supply_shift_size,), s.T, seed, noise=False
    )
    frame = simulate_equilibrium(quiet, Beliefs(A=s.A, believed_sigma_eta=s.believed_sigma_eta))
    h_max = min(s.sweep_horizon, s.T - s.supply_shift_time)
    start = s.supply_shift_time - 1
    realized = frame["wedge"].to_numpy()[start : start + h_max + 1]
    expected = wedge_closed_form(quiet, beliefs, s.supply_shift_time, s.supply_shift_size, h_max)
    gap = float(np.max(np.abs(realized - expected)))
    worst = max(identities.clearing_error, identities.decomposition_error, identities.demand_error)
    return [
        _row("market_clearing", worst, 0.0, 1e-12, identities.passes(1e-12), "m_S = c S and m_T = c S + w"),
        _row("wedge_decay", gap, 0.0, 1e-9, gap <= 1e-9, f"wedge after a supply shift over {h_max} periods"),
    ]


def _sweep_row(s: SimulateSettings, seed: int) -> dict:
    sweep = simulate_jump_sweep(
        SweepConfig(
            A=s.A,
            sigma_u=s.eq_sigma_u,
            believed_sigma_eta=s.believed_sigma_eta,
            p=s.p,
            gamma=s.gamma,
            supply_bar=s.supply_bar,
            horizon=s.sweep_horizon,
            replications=s.replications,
            seed=seed,
        )
    )
    report = corollary1_check(sweep)
    return _row(
        "onset_delta_predicts_correction",
        report.rank_corr,
        0.0,
        0.0,
        report.passes,
        f"Spearman over {report.n} replications; means rise with jump size: {report.mean_increasing}",
    )


def run_proposition_suite(
    settings: SimulateSettings, seed: int = DEFAULT_SEED, threads: int = DEFAULT_THREADS
) -> pd.DataFrame:
    """Every simulation check as one report frame."""
    rows = [_riccati_row(settings)]
    rows += _process_rows(settings, seed)
    rows += _post_break_rows(settings, seed)
    rows += _mixture_rows(seed)
    rows += _equilibrium_rows(settings, seed)
    rows.append(_sweep_row(settings, seed))
    spikes = delta_spike_experiment(SpikeExperiment(n_paths=settings.spike_paths, seed=seed), threads)
    rows.append(
        _row(
            "delta_spike_at_break",
            spikes.rate,
            spikes.required_rate,
            0.0,
            spikes.passes,
            f"{spikes.hits}/{spikes.n_paths} paths spike within 3 months of the break",
        )
    )
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    failed = frame.loc[frame["status"] == "FAIL", "check"].tolist()
    if failed:
        logger.warning("failed checks: %s", ", ".join(failed))
    return frame


def simulated_paths(settings: SimulateSettings, seed: int = DEFAULT_SEED) -> pd.DataFrame:
    """One true-process path with the misspecified filter's beliefs, for plotting."""
    s = settings
    cfg = TrueProcessConfig(s.A, s.sigma_eta, s.sigma_u, s.p, s.mu_J, s.sigma_J, s.T, seed, s.lambda0)
    path = simulate_true_process(cfg)
    trace = run_misspecified_filter(path, s.believed_sigma_eta, s.A, s.sigma_u)
    frame = path.to_frame()
    frame["lambda_hat"] = trace.post_mean
    frame["post_var"] = trace.post_var
    frame["gain"] = trace.gain
    frame["error"] = trace.post_mean - path.lam
    return frame
