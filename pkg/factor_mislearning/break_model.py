"""
Break-aware benchmark: two-state Gaussian Markov switching model.

State 1 is the high-variance (break) state after relabeling. The Hamilton
recursion runs in log space; probabilities are exponentiated only for output.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize, special, stats

from .config import (
    DEFAULT_BREAK_MIN_OBS,
    DEFAULT_BREAK_STARTS,
    DEFAULT_DEGENERATE_SD_MULTIPLE,
    DEFAULT_DEGENERATE_STAY_PROB,
    DEFAULT_OPTIMIZER_MAXITER,
    DEFAULT_OPTIMIZER_TOL,
    DEFAULT_SD_FLOOR,
)
from .errors import EstimationError, NumericalError, PreconditionError
from .stable_filter import _as_series, information_criteria

logger = logging.getLogger(__name__)

BREAK_PARAM_COUNT = 6
_PENALTY = 1e12


@dataclass(frozen=True)
class BreakParams:
    mu0: float
    mu1: float
    sd0: float
    sd1: float
    p00: float
    p11: float

    def __post_init__(self):
        if self.sd0 <= 0 or self.sd1 <= 0:
            raise PreconditionError("state standard deviations must be positive")
        if not (0.0 <= self.p00 <= 1.0 and 0.0 <= self.p11 <= 1.0):
            raise PreconditionError("self-transition probabilities must lie in [0, 1]")

    def swapped(self) -> "BreakParams":
        return BreakParams(self.mu1, self.mu0, self.sd1, self.sd0, self.p11, self.p00)

    def relabeled(self) -> "BreakParams":
        """State 1 is the higher-variance state."""
        return self.swapped() if self.sd0 > self.sd1 else self

    def ergodic(self) -> np.ndarray:
        denom = 2.0 - self.p00 - self.p11
        if denom <= 0.0:
            return np.array([0.5, 0.5])
        pi1 = (1.0 - self.p00) / denom
        return np.array([1.0 - pi1, pi1])

    def as_dict(self) -> dict[str, float]:
        return {
            "mean0": self.mu0,
            "mean1": self.mu1,
            "sd0": self.sd0,
            "sd1": self.sd1,
            "p00": self.p00,
            "p11": self.p11,
        }


@dataclass
class BreakFit:
    params: BreakParams
    loglik: float
    index: pd.Index
    pred_prob: np.ndarray  # Pr(S_t = j | F_{t-1}), shape (T, 2)
    filt_prob: np.ndarray  # Pr(S_t = j | F_t), shape (T, 2)
    next_break_prob: np.ndarray  # Pr(S_{t+1} = 1 | F_t)
    logdens: np.ndarray
    n_obs: int
    aic: float
    bic: float
    converged: bool = True
    degenerate: bool = False
    n_starts_ok: int = 0
    notes: list[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "month": self.index,
                "pred_break_prob": self.pred_prob[:, 1],
                "break_prob": self.filt_prob[:, 1],
                "next_break_prob": self.next_break_prob,
                "logdens_break": self.logdens,
            }
        )


def _log(value: float) -> float:
    return math.log(value) if value > 0.0 else -math.inf


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = a if a > b else b
    return m + math.log1p(math.exp(-abs(a - b)))


def hamilton_filter(series, params: BreakParams, init: np.ndarray | None = None) -> BreakFit:
    """Two-state Hamilton filter; ``init`` is Pr(S_1 = j) before the first observation.

    Raises:
        NumericalError: the predictive density is zero in log space
    """
    f, index = _as_series(series)
    n = len(f)
    if n < 1:
        raise PreconditionError("series is empty")
    init = params.ergodic() if init is None else np.asarray(init, dtype=float)
    if init.shape != (2,) or np.any(init < 0) or abs(init.sum() - 1.0) > 1e-12:
        raise PreconditionError("initial distribution must be two nonnegative weights summing to 1")

    ld0 = stats.norm.logpdf(f, params.mu0, params.sd0)
    ld1 = stats.norm.logpdf(f, params.mu1, params.sd1)
    l00, l01 = _log(params.p00), _log(1.0 - params.p00)
    l11, l10 = _log(params.p11), _log(1.0 - params.p11)

    log_pred = np.empty((n, 2))
    log_filt = np.empty((n, 2))
    logdens = np.empty(n)
    lp0, lp1 = _log(init[0]), _log(init[1])
    for t in range(n):
        a0 = lp0 + ld0[t]
        a1 = lp1 + ld1[t]
        c = _logaddexp(a0, a1)
        if not math.isfinite(c):
            raise NumericalError(f"zero predictive density at t={index[t]}")
        log_pred[t] = lp0, lp1
        lf0, lf1 = a0 - c, a1 - c
        log_filt[t] = lf0, lf1
        logdens[t] = c
        lp0 = _logaddexp(lf0 + l00, lf1 + l10)
        lp1 = _logaddexp(lf0 + l01, lf1 + l11)

    filt_prob = np.exp(log_filt)
    next_break = np.exp(np.logaddexp(log_filt[:, 0] + l01, log_filt[:, 1] + l11))
    loglik = float(np.sum(logdens))
    aic, bic = information_criteria(loglik, BREAK_PARAM_COUNT, n)
    return BreakFit(
        params=params,
        loglik=loglik,
        index=index,
        pred_prob=np.exp(log_pred),
        filt_prob=filt_prob,
        next_break_prob=next_break,
        logdens=logdens,
        n_obs=n,
        aic=aic,
        bic=bic,
    )


def break_probability_series(fit: BreakFit, mode: str = "filtered") -> pd.Series:
    """Pr(S_t = 1 | F_t) (``filtered``) or Pr(S_{t+1} = 1 | F_t) (``predicted_next``)."""
    if mode == "filtered":
        values = fit.filt_prob[:, 1]
    elif mode == "predicted_next":
        values = fit.next_break_prob
    else:
        raise PreconditionError(f"mode must be 'filtered' or 'predicted_next', got '{mode}'")
    return pd.Series(values, index=fit.index, name=f"break_prob_{mode}")


# ===== ESTIMATION =====


def _to_params(theta: np.ndarray, floor: float) -> BreakParams:
    return BreakParams(
        mu0=float(theta[0]),
        mu1=float(theta[1]),
        sd0=floor + float(np.exp(theta[2])),
        sd1=floor + float(np.exp(theta[3])),
        p00=float(special.expit(theta[4])),
        p11=float(special.expit(theta[5])),
    )


def _to_theta(params: BreakParams, floor: float) -> np.ndarray:
    return np.array(
        [
            params.mu0,
            params.mu1,
            np.log(max(params.sd0 - floor, floor)),
            np.log(max(params.sd1 - floor, floor)),
            special.logit(params.p00),
            special.logit(params.p11),
        ]
    )


def start_points(series: np.ndarray, n_starts: int) -> list[BreakParams]:
    """Deterministic starts around the sample moments."""
    mean = float(np.mean(series))
    sd = max(float(np.std(series, ddof=1)), 1e-8)
    starts = []
    sd_pairs = ((0.7, 1.5), (0.5, 2.0), (0.9, 1.2))
    mean_shifts = ((0.0, 0.0), (0.25, -0.25), (-0.25, 0.25))
    stay_pairs = ((0.95, 0.9), (0.9, 0.8), (0.98, 0.95))
    for i in range(len(sd_pairs) * len(mean_shifts) * len(stay_pairs)):
        s_lo, s_hi = sd_pairs[i % 3]
        m_lo, m_hi = mean_shifts[(i // 3) % 3]
        p_lo, p_hi = stay_pairs[(i // 9) % 3]
        starts.append(BreakParams(mean + m_lo * sd, mean + m_hi * sd, s_lo * sd, s_hi * sd, p_lo, p_hi))
    return starts[: max(1, n_starts)]


def _negloglik(theta: np.ndarray, f: np.ndarray, floor: float) -> float:
    try:
        value = -hamilton_filter(f, _to_params(theta, floor)).loglik
    except (NumericalError, PreconditionError, OverflowError):
        return _PENALTY
    return value if np.isfinite(value) else _PENALTY


def is_degenerate(params: BreakParams, floor: float) -> bool:
    limit = DEFAULT_DEGENERATE_SD_MULTIPLE * floor
    return (
        params.sd0 <= limit
        or params.sd1 <= limit
        or params.p00 > DEFAULT_DEGENERATE_STAY_PROB
        or params.p11 > DEFAULT_DEGENERATE_STAY_PROB
    )


def fit_break_mle(
    series,
    min_obs: int = DEFAULT_BREAK_MIN_OBS,
    n_starts: int = DEFAULT_BREAK_STARTS,
    sd_floor: float = DEFAULT_SD_FLOOR,
    tol: float = DEFAULT_OPTIMIZER_TOL,
    starts: Sequence[BreakParams] | None = None,
) -> BreakFit:
    """Maximum likelihood for the six regime parameters, relabeled so sd1 >= sd0.

    ``starts`` replaces the moment-based start points. Degenerate optima are
    returned with ``degenerate=True`` rather than raised.

    Raises:
        PreconditionError: fewer than ``min_obs`` observations
        EstimationError: no start converged; carries the best point found
    """
    f, index = _as_series(series)
    if len(f) < min_obs:
        raise PreconditionError(f"break model needs >= {min_obs} observations, got {len(f)}")

    if np.ptp(f) == 0.0:
        params = BreakParams(f[0], f[0], sd_floor, sd_floor, 0.5, 0.5)
        fit = hamilton_filter(pd.Series(f, index=index), params)
        fit.degenerate, fit.converged = True, False
        fit.notes.append("constant series")
        logger.warning("constant series; break fit pinned at the s.d. floor")
        return fit

    best_theta, best_value, n_ok = None, np.inf, 0
    for start in start_points(f, n_starts) if starts is None else starts:
        x0 = _to_theta(start, sd_floor)
        f0 = _negloglik(x0, f, sd_floor)
        res = optimize.minimize(
            _negloglik,
            x0,
            args=(f, sd_floor),
            method="Nelder-Mead",
            options={
                "xatol": tol,
                "fatol": tol * max(1.0, abs(f0)),
                "maxiter": DEFAULT_OPTIMIZER_MAXITER,
                "maxfev": DEFAULT_OPTIMIZER_MAXITER,
                "adaptive": True,
            },
        )
        if not np.isfinite(res.fun) or res.fun >= _PENALTY:
            continue
        n_ok += int(res.success)
        if res.fun < best_value:
            best_theta, best_value = res.x, float(res.fun)

    if best_theta is None or n_ok == 0:
        raise EstimationError(
            "break model: no optimizer start converged",
            best_point=None if best_theta is None else _to_params(best_theta, sd_floor).as_dict(),
            best_value=None if best_theta is None else -best_value,
        )

    params = _to_params(best_theta, sd_floor).relabeled()
    fit = hamilton_filter(pd.Series(f, index=index), params)
    fit.n_starts_ok = n_ok
    fit.degenerate = is_degenerate(params, sd_floor)
    if fit.degenerate:
        fit.notes.append("degenerate regime")
        logger.warning("break fit is degenerate (s.d. at floor or absorbing state)")
    return fit


# ===== MIXTURE LIKELIHOOD RATIO =====


@dataclass(frozen=True)
class MixtureLRConfig:
    """Stable predictive N(m, s_S2) against the jump mixture with N(m + mu_J, s_S2 + sigma_J2)."""

    m: float
    s_S2: float
    sigma_J2: float
    mu_J: float
    p_t: float

    def __post_init__(self):
        if not self.s_S2 > 0:
            raise PreconditionError("s_S2 must be > 0")
        if self.sigma_J2 < 0:
            raise PreconditionError("sigma_J2 must be >= 0")
        if not 0.0 <= self.p_t <= 1.0:
            raise PreconditionError("p_t must lie in [0, 1]")

    @property
    def s_B2(self) -> float:
        return self.s_S2 + self.sigma_J2


def mixture_log_ratio(cfg: MixtureLRConfig, x):
    """Return (g, delta): the jump-vs-stable log density ratio and the mixture log ratio."""
    x = np.asarray(x, dtype=float)
    s, sb = cfg.s_S2, cfg.s_B2
    g = 0.5 * np.log(s / sb) + (x - cfg.m) ** 2 / (2.0 * s) - (x - cfg.m - cfg.mu_J) ** 2 / (2.0 * sb)
    if cfg.p_t == 0.0:
        delta = np.zeros_like(g)
    else:
        delta = np.logaddexp(np.log1p(-cfg.p_t), np.log(cfg.p_t) + g)
    if g.ndim == 0:
        return float(g), float(delta)
    return g, delta


def mixture_log_ratio_direct(cfg: MixtureLRConfig, x):
    """Log ratio of the two predictive densities evaluated directly."""
    x = np.asarray(x, dtype=float)
    log_stable = stats.norm.logpdf(x, cfg.m, np.sqrt(cfg.s_S2))
    log_jump = stats.norm.logpdf(x, cfg.m + cfg.mu_J, np.sqrt(cfg.s_B2))
    with np.errstate(divide="ignore"):
        log_break = np.logaddexp(np.log1p(-cfg.p_t) + log_stable, np.log(cfg.p_t) + log_jump)
    return log_break - log_stable


@dataclass(frozen=True)
class Prop2Report:
    dg_dmuJ: float
    dg_dmuJ_numeric: float
    dg_ds: float
    dg_ds_numeric: float
    rigidity_threshold: float
    rigidity_holds: bool

    @property
    def sign_consistent(self) -> bool:
        """dg/ds < 0 exactly when the rigidity condition holds."""
        if self.dg_ds == 0.0:
            return not self.rigidity_holds
        return (self.dg_ds < 0.0) == self.rigidity_holds


def prop2_diagnostics(cfg: MixtureLRConfig, step: float = 1e-6) -> Prop2Report:
    """Slopes of g at x = m + mu_J in |mu_J| and in the stable variance, with the rigidity flag."""
    s, sj2, mu = cfg.s_S2, cfg.sigma_J2, cfg.mu_J
    sign = 1.0 if mu >= 0 else -1.0

    def g_at_jump(abs_mu: float, s_val: float) -> float:
        shifted = MixtureLRConfig(cfg.m, s_val, sj2, sign * abs_mu, cfg.p_t)
        return mixture_log_ratio(shifted, cfg.m + sign * abs_mu)[0]

    a = abs(mu)
    h_mu = step * max(1.0, a)
    if a > h_mu:
        num_mu = (g_at_jump(a + h_mu, s) - g_at_jump(a - h_mu, s)) / (2.0 * h_mu)
    else:
        num_mu = (g_at_jump(a + h_mu, s) - g_at_jump(a, s)) / h_mu
    h_s = step * s
    num_s = (g_at_jump(a, s + h_s) - g_at_jump(a, s - h_s)) / (2.0 * h_s)

    threshold = sj2 * s / (s + sj2)
    return Prop2Report(
        dg_dmuJ=a / s,
        dg_dmuJ_numeric=float(num_mu),
        dg_ds=sj2 / (2.0 * s * (s + sj2)) - mu**2 / (2.0 * s**2),
        dg_ds_numeric=float(num_s),
        rigidity_threshold=threshold,
        rigidity_holds=bool(mu**2 > threshold),
    )
