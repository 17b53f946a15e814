"""
Synthetic data from the jump-augmented premium process, the misspecified
filter run against it, and the market-clearing equilibrium.

Every stochastic routine draws from ``rng_for(seed, index)`` so that a
replication's stream depends only on (seed, replication index).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import signal, stats

from .break_model import MixtureLRConfig, mixture_log_ratio
from .errors import ConfigError, EmptySampleError, PreconditionError
from .stable_filter import FilterInit, StableParams, kalman_filter, steady_state_gain

logger = logging.getLogger(__name__)


def rng_for(seed: int, index: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for replication ``index`` of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


# ===== TRUE PROCESS =====


@dataclass(frozen=True)
class TrueProcessConfig:
    A: float
    sigma_eta: float
    sigma_u: float
    p: float
    mu_J: float
    sigma_J: float
    T: int
    seed: int = 0
    lambda0: float = 0.0

    def __post_init__(self):
        if not abs(self.A) < 1:
            raise ConfigError("A", "must satisfy |A| < 1")
        for key in ("sigma_eta", "sigma_u", "sigma_J"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be >= 0")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p", "must lie in [0, 1]")


@dataclass
class SimPath:
    """Periods are numbered 1..T; arrays hold period t at position t-1."""

    lam: np.ndarray
    f: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    jumps: np.ndarray
    jump_times: tuple[int, ...]
    jump_sizes: dict[int, float] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.f)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": np.arange(1, self.T + 1),
                "lambda": self.lam,
                "f": self.f,
                "u": self.u,
                "jump": self.jumps,
            }
        )


def simulate_true_process(cfg: TrueProcessConfig, index: int = 0) -> SimPath:
    """Draw lambda_t = A lambda_{t-1} + eta_t + J_t and f_t = lambda_t + u_t."""
    if cfg.T <= 0:
        raise EmptySampleError("simulation length T must be positive")
    rng = rng_for(cfg.seed, index)
    eta = rng.normal(0.0, cfg.sigma_eta, cfg.T)
    u = rng.normal(0.0, cfg.sigma_u, cfg.T)
    hit = rng.random(cfg.T) < cfg.p
    sizes = rng.normal(cfg.mu_J, cfg.sigma_J, cfg.T)
    jumps = np.where(hit, sizes, 0.0)
    lam, _ = signal.lfilter([1.0], [1.0, -cfg.A], eta + jumps, zi=[cfg.A * cfg.lambda0])
    times = tuple(int(t) + 1 for t in np.flatnonzero(hit))
    return SimPath(
        lam=lam,
        f=lam + u,
        u=u,
        eta=eta,
        jumps=jumps,
        jump_times=times,
        jump_sizes={t: float(jumps[t - 1]) for t in times},
    )


@dataclass(frozen=True)
class FrequencyReport:
    count: int
    frequency: float
    z: float
    passes: bool


def jump_frequency_check(path: SimPath, p: float) -> FrequencyReport:
    """Binomial z-score of the recorded jump count against probability p."""
    count = len(path.jump_times)
    freq = count / path.T
    se = np.sqrt(p * (1.0 - p) / path.T)
    z = 0.0 if se == 0 else (freq - p) / se
    return FrequencyReport(count, freq, float(z), bool(abs(z) <= 3.0))


# ===== MISSPECIFIED FILTER =====


@dataclass
class FilterTrace:
    observed: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray
    gain: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    logdens: np.ndarray

    @property
    def innovations(self) -> np.ndarray:
        return self.observed - self.pred_mean



def run_misspecified_filter(
    path: SimPath,
    believed_sigma_eta: float,
    A: float,
    sigma_u: float,
    init: FilterInit | None = None,
) -> FilterTrace:
    """Kalman recursion under the believed (jump-free) state-space model."""
    if believed_sigma_eta < 0:
        raise PreconditionError("believed_sigma_eta must be >= 0")
    fit = kalman_filter(path.f, StableParams(A, sigma_u, believed_sigma_eta), init)
    return FilterTrace(
        observed=path.f,
        post_mean=fit.filt_mean,
        post_var=fit.filt_var,
        gain=fit.gain,
        pred_mean=fit.pred_mean,
        pred_var=fit.pred_var,
        logdens=fit.logdens,
    )


def steady_state_init(A: float, believed_sigma_eta: float, sigma_u: float, mean: float = 0.0) -> FilterInit:
    """Prior whose variance is the steady-state filtered variance, so gains start converged."""
    ss = steady_state_gain(A, believed_sigma_eta, sigma_u)
    return FilterInit(mean, (1.0 - ss.gain) * ss.p_pred)


@dataclass(frozen=True)
class WhitenessReport:
    autocorr: float
    bound: float
    passes: bool


def innovation_whiteness(trace: FilterTrace) -> WhitenessReport:
    """Lag-1 autocorrelation of standardized innovations against 3/sqrt(T)."""
    z = trace.innovations / np.sqrt(trace.pred_var)
    z = z - z.mean()
    rho1 = float(np.dot(z[1:], z[:-1]) / np.dot(z, z))
    bound = 3.0 / np.sqrt(len(z))
    return WhitenessReport(rho1, bound, abs(rho1) < bound)


# ===== POST-BREAK ERROR DYNAMICS =====


def post_break_error_path(path: SimPath, trace: FilterTrace, t_star: int, h_max: int) -> np.ndarray:
    """Realized belief errors e_{t*+h} = lambda_hat - lambda for h = 0..h_max on one path."""
    if t_star not in path.jump_times:
        raise PreconditionError(f"t={t_star} is not a jump time")
    if t_star + h_max > path.T:
        raise PreconditionError("window runs past the end of the path")
    later = [t for t in path.jump_times if t_star < t <= t_star + h_max]
    if later:
        raise PreconditionError(f"further jumps inside the window at t={later}")
    window = slice(t_star - 1, t_star + h_max)
    return trace.post_mean[window] - path.lam[window]


def closed_form_error(A: float, gain: float, jump: float, e_prev: float, h: np.ndarray) -> np.ndarray:
    """((1-K)A)^{h+1} e_prev - ((1-K)A)^h (1-K) J."""
    h = np.asarray(h, dtype=float)
    phi = (1.0 - gain) * A
    return phi ** (h + 1) * e_prev - phi**h * (1.0 - gain) * jump


@dataclass(frozen=True)
class PostBreakExperiment:
    A: float = 0.9
    gain: float = 0.2
    jump: float = 1.0
    e_prev: float = 0.0
    sigma_eta: float = 0.1
    sigma_u: float = 1.0
    p: float = 0.0
    mu_J: float = 1.0
    sigma_J: float = 0.0
    horizons: tuple[int, ...] = (0, 1, 5, 10)
    n_paths: int = 100_000
    seed: int = 0


@dataclass
class PostBreakReport:
    horizons: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    closed_form: np.ndarray
    rejected: int

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.mean - self.closed_form) / self.se
        return np.where(self.se > 0, z, np.where(np.isclose(self.mean, self.closed_form), 0.0, np.inf))

    @property
    def passes(self) -> bool:
        return bool(np.all(np.abs(self.z) <= 3.0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"h": self.horizons, "mean": self.mean, "se": self.se, "closed_form": self.closed_form, "z": self.z}
        )


def _draw_jump_free_window(rng: np.random.Generator, n: int, h_max: int, p: float) -> tuple[np.ndarray, int]:
    """Jump draws for h_max post-onset periods, rejecting paths that contain a jump."""
    if p == 0.0 or h_max == 0:
        return np.zeros((n, h_max), dtype=bool), 0
    if p == 1.0:
        raise PreconditionError("cannot condition on no further jumps when p = 1")
    hits = rng.random((n, h_max)) < p
    rejected = 0
    bad = hits.any(axis=1)
    while bad.any():
        rejected += int(bad.sum())
        hits[bad] = rng.random((int(bad.sum()), h_max)) < p
        bad = hits.any(axis=1)
    return hits, rejected


def monte_carlo_post_break_errors(exp: PostBreakExperiment) -> PostBreakReport:
    """Average post-break belief error over paths with a fixed gain, vectorized across paths."""
    horizons = np.asarray(sorted(exp.horizons), dtype=int)
    h_max = int(horizons.max())
    rng = rng_for(exp.seed, 0)
    n = exp.n_paths
    hits, rejected = _draw_jump_free_window(rng, n, h_max, exp.p)

    lam = np.zeros(n)
    lam_hat = lam + exp.e_prev
    errors = np.empty((n, h_max + 1))
    for h in range(h_max + 1):
        # post-onset jumps come from the accepted draws, all False after rejection
        jump = exp.jump if h == 0 else np.where(hits[:, h - 1], exp.jump, 0.0)
        lam = exp.A * lam + rng.normal(0.0, exp.sigma_eta, n) + jump
        obs = lam + rng.normal(0.0, exp.sigma_u, n)
        lam_hat = (1.0 - exp.gain) * exp.A * lam_hat + exp.gain * obs
        errors[:, h] = lam_hat - lam

    picked = errors[:, horizons]
    return PostBreakReport(
        horizons=horizons,
        mean=picked.mean(axis=0),
        se=picked.std(axis=0, ddof=1) / np.sqrt(n),
        closed_form=closed_form_error(exp.A, exp.gain, exp.jump, exp.e_prev, horizons),
        rejected=rejected,
    )


@dataclass
class GainReport:
    grid: np.ndarray
    gains: np.ndarray
    persistence: np.ndarray

    @property
    def gains_increasing(self) -> bool:
        return bool(np.all(np.diff(self.gains) > 0))

    @property
    def persistence_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.persistence) < 0))


def gain_monotonicity_check(grid, A: float, sigma_u: float) -> GainReport:
    """Steady-state gains and |(1-K)A| across believed state volatilities."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise PreconditionError("grid must be nonempty, nonnegative and strictly increasing")
    gains = np.array([steady_state_gain(A, s, sigma_u).gain for s in grid])
    return GainReport(grid, gains, np.abs((1.0 - gains) * A))


# ===== EQUILIBRIUM =====


@dataclass(frozen=True)
class EquilibriumConfig:
    gamma: float
    sigma_u: float
    supply_bar: float = 1.0
    supply_sd: float = 0.0
    shift_times: tuple[int, ...] = ()
    shift_sizes: tuple[float, ...] = ()
    T: int = 240
    seed: int = 0
    noise: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma", "must be > 0")
        if not self.sigma_u > 0:
            raise ConfigError("sigma_u", "must be > 0")
        if len(self.shift_times) != len(self.shift_sizes):
            raise ConfigError("shift_sizes", "needs one size per shift time")

    @property
    def price_of_risk(self) -> float:
        return self.gamma * self.sigma_u**2


@dataclass(frozen=True)
class Beliefs:
    """The investors' filter; correct beliefs track the true premium exactly."""

    A: float = 0.9
    sigma_eta: float = 0.0
    believed_sigma_eta: float = 0.01
    correct: bool = False


def simulate_equilibrium(cfg: EquilibriumConfig, beliefs: Beliefs) -> pd.DataFrame:
    """Per-period subjective and true expected returns, wedge, supply, demand and realized return.

    Supply shifts move the true premium by gamma sigma_u^2 times the shift; the
    filter learns it from noisy signals, so the wedge w_t = A (lambda_t - lambda_hat_t)
    opens on impact and decays at rate |(1-K)A|.
    """
    rng = rng_for(cfg.seed, 0)
    T = cfg.T
    c = cfg.price_of_risk
    shifts = np.zeros(T)
    for t, size in zip(cfg.shift_times, cfg.shift_sizes, strict=True):
        if not 1 <= t <= T:
            raise ConfigError("shift_times", f"{t} outside 1..{T}")
        shifts[t - 1] += size
    nu = rng.normal(0.0, cfg.supply_sd, T) if cfg.supply_sd > 0 else np.zeros(T)
    supply = cfg.supply_bar + nu + np.cumsum(shifts)

    obs_noise = rng.normal(0.0, cfg.sigma_u, T) if cfg.noise else np.zeros(T)
    ret_noise = rng.normal(0.0, cfg.sigma_u, T) if cfg.noise else np.zeros(T)
    state_noise = rng.normal(0.0, beliefs.sigma_eta, T) if cfg.noise and beliefs.sigma_eta > 0 else np.zeros(T)

    lam, _ = signal.lfilter([1.0], [1.0, -beliefs.A], state_noise + c * shifts, zi=[0.0])
    if beliefs.correct:
        lam_hat = lam.copy()
    else:
        init = steady_state_init(beliefs.A, beliefs.believed_sigma_eta, cfg.sigma_u)
        params = StableParams(beliefs.A, cfg.sigma_u, beliefs.believed_sigma_eta)
        lam_hat = kalman_filter(lam + obs_noise, params, init).filt_mean

    m_s = c * supply
    wedge = beliefs.A * (lam - lam_hat)
    m_t = m_s + wedge
    demand = m_s / c
    return pd.DataFrame(
        {
            "t": np.arange(1, T + 1),
            "supply": supply,
            "m_S": m_s,
            "m_T": m_t,
            "wedge": wedge,
            "lambda": lam,
            "lambda_hat": lam_hat,
            "demand": demand,
            "f_next": m_t + ret_noise,
        }
    )


@dataclass(frozen=True)
class IdentityReport:
    clearing_error: float
    decomposition_error: float
    demand_error: float

    def passes(self, tol: float = 1e-12) -> bool:
        return max(self.clearing_error, self.decomposition_error) <= tol and self.demand_error <= tol


def equilibrium_identities(frame: pd.DataFrame, cfg: EquilibriumConfig) -> IdentityReport:
    """Market clearing and the expected-return decomposition, as max absolute errors."""
    c = cfg.price_of_risk
    clearing = np.abs(frame["m_S"].to_numpy() - c * frame["supply"].to_numpy())
    decomposition = np.abs(frame["m_T"].to_numpy() - (c * frame["supply"].to_numpy() + frame["wedge"].to_numpy()))
    scale = np.maximum(1.0, np.abs(frame["supply"].to_numpy()))
    demand = np.abs(frame["demand"].to_numpy() - frame["supply"].to_numpy()) / scale
    return IdentityReport(float(clearing.max()), float(decomposition.max()), float(demand.max()))


def wedge_closed_form(cfg: EquilibriumConfig, beliefs: Beliefs, t_star: int, size: float, h_max: int) -> np.ndarray:
    """Noise-free wedge after a supply shift at t*, from the steady-state error recursion."""
    gain = steady_state_gain(beliefs.A, beliefs.believed_sigma_eta, cfg.sigma_u).gain
    errors = closed_form_error(beliefs.A, gain, cfg.price_of_risk * size, 0.0, np.arange(h_max + 1))
    return -beliefs.A * errors


# ===== JUMP-SIZE SWEEP =====


@dataclass(frozen=True)
class SweepConfig:
    A: float = 0.9
    sigma_u: float = 0.2
    sigma_eta: float = 0.0
    believed_sigma_eta: float = 0.01
    jump_multiples: tuple[float, ...] = (0.5, 1.0, 2.0)
    sigma_J: float = 0.0
    p: float = 0.02
    gamma: float = 2.0
    supply_bar: float = 1.0
    horizon: int = 12
    replications: int = 10_000
    seed: int = 0


@dataclass
class JumpSweep:
    jump_size: np.ndarray
    delta_onset: np.ndarray
    cum_excess: np.ndarray
    horizon: int


def simulate_jump_sweep(cfg: SweepConfig) -> JumpSweep:
    """Replications of a single jump per size; vectorized within each size block."""
    gain_ss = steady_state_gain(cfg.A, cfg.believed_sigma_eta, cfg.sigma_u)
    gain, p_pred = gain_ss.gain, gain_ss.p_pred
    s_s2 = p_pred + cfg.sigma_u**2
    reference_mu = float(np.median(cfg.jump_multiples)) * cfg.sigma_u
    mixture = MixtureLRConfig(0.0, s_s2, cfg.sigma_J**2, reference_mu, cfg.p)
    n = cfg.replications
    sizes, deltas, cums = [], [], []

    for block, multiple in enumerate(cfg.jump_multiples):
        rng = rng_for(cfg.seed, block)
        jump = multiple * cfg.sigma_u + rng.normal(0.0, cfg.sigma_J, n)
        lam = jump + rng.normal(0.0, cfg.sigma_eta, n)
        obs = lam + rng.normal(0.0, cfg.sigma_u, n)
        _, delta = mixture_log_ratio(mixture, obs)
        lam_hat = gain * obs
        cum = np.zeros(n)
        for _ in range(cfg.horizon):
            wedge = cfg.A * (lam - lam_hat)
            cum += wedge + rng.normal(0.0, cfg.sigma_u, n)
            lam = cfg.A * lam + rng.normal(0.0, cfg.sigma_eta, n)
            obs = lam + rng.normal(0.0, cfg.sigma_u, n)
            lam_hat = (1.0 - gain) * cfg.A * lam_hat + gain * obs
        sizes.append(np.full(n, multiple * cfg.sigma_u))
        deltas.append(np.asarray(delta))
        cums.append(cum)

    return JumpSweep(np.concatenate(sizes), np.concatenate(deltas), np.concatenate(cums), cfg.horizon)


@dataclass(frozen=True)
class MonotonicityReport:
    n: int
    rank_corr: float
    p_value: float
    means: dict[float, float]
    sharpes: dict[float, float]
    mean_increasing: bool
    insufficient_sample: bool

    @property
    def passes(self) -> bool:
        return not self.insufficient_sample and self.rank_corr > 0 and self.mean_increasing


def corollary1_check(sweep: JumpSweep, h: int | None = None) -> MonotonicityReport:
    """Rank correlation of onset delta with the h-period cumulative excess return.

    Sharpe ratios per jump size are reported descriptively only.
    """
    if h is not None and h != sweep.horizon:
        raise PreconditionError(f"sweep was simulated for horizon {sweep.horizon}, not {h}")
    n = len(sweep.delta_onset)
    frame = pd.DataFrame({"size": sweep.jump_size, "cum": sweep.cum_excess})
    grouped = frame.groupby("size")["cum"]
    means = grouped.mean()
    sds = grouped.std(ddof=1)
    sharpes = (means / sds.where(sds > 0)).to_dict()
    if n < 3:
        logger.warning("jump sweep has %d replications; sample is insufficient", n)
        return MonotonicityReport(n, np.nan, np.nan, means.to_dict(), sharpes, False, True)
    result = stats.spearmanr(sweep.delta_onset, sweep.cum_excess)
    return MonotonicityReport(
        n=n,
        rank_corr=float(result.statistic),
        p_value=float(result.pvalue),
        means=means.to_dict(),
        sharpes=sharpes,
        mean_increasing=bool(len(means) < 2 or np.all(np.diff(means.to_numpy()) > 0)),
        insufficient_sample=False,
    )


# ===== ENTROPY RATE =====


@dataclass(frozen=True)
class EntropyReport:
    mean_loglik: float
    target: float
    se: float

    @property
    def z(self) -> float:
        return (self.mean_loglik - self.target) / self.se

    def passes(self, k: float = 2.0) -> bool:
        return abs(self.z) <= k


def entropy_rate_check(A: float, sigma_eta: float, sigma_u: float, T: int = 100_000, seed: int = 0) -> EntropyReport:
    """Average one-step predictive log-likelihood of a correctly specified filter
    against the Gaussian entropy rate of its steady-state predictive density."""
    cfg = TrueProcessConfig(A, sigma_eta, sigma_u, 0.0, 0.0, 0.0, T, seed)
    path = simulate_true_process(cfg)
    init = steady_state_init(A, sigma_eta, sigma_u)
    trace = run_misspecified_filter(path, sigma_eta, A, sigma_u, init)
    ss = steady_state_gain(A, sigma_eta, sigma_u)
    s2 = ss.p_pred + sigma_u**2
    target = -0.5 * (np.log(2.0 * np.pi * s2) + 1.0)
    return EntropyReport(float(trace.logdens.mean()), float(target), float(trace.logdens.std(ddof=1) / np.sqrt(T)))
