"""
Stable state-space model: scalar Kalman filter, steady-state gain and MLE.

    lambda_t = rho * lambda_{t-1} + eta_t,   eta_t ~ N(0, sigma_eta^2)
    f_t      = lambda_t + u_t,               u_t   ~ N(0, sigma_u^2)

Raw returns are filtered without demeaning; the latent premium carries the mean.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize, signal

from .config import (
    DEFAULT_DIFFUSE_SCALE,
    DEFAULT_OPTIMIZER_MAXITER,
    DEFAULT_OPTIMIZER_TOL,
    DEFAULT_RICCATI_MAX_ITER,
    DEFAULT_RICCATI_TOL,
    DEFAULT_SD_FLOOR,
    DEFAULT_DEGENERATE_SD_MULTIPLE,
    DEFAULT_STABLE_MIN_OBS,
    DEFAULT_STABLE_STARTS,
    DEFAULT_STATIONARY_RHO_LIMIT,
)
from .errors import EstimationError, PreconditionError

logger = logging.getLogger(__name__)

STABLE_PARAM_COUNT = 3
LOG_2PI = np.log(2.0 * np.pi)
_PENALTY = 1e12


@dataclass(frozen=True)
class StableParams:
    rho: float
    sigma_u: float
    sigma_eta: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise PreconditionError(f"|rho| must be < 1, got {self.rho}")
        if self.sigma_u < 0 or self.sigma_eta < 0:
            raise PreconditionError("standard deviations must be nonnegative")

    def as_dict(self) -> dict[str, float]:
        return {"rho": self.rho, "sigma_u": self.sigma_u, "sigma_eta": self.sigma_eta}


@dataclass(frozen=True)
class FilterInit:
    """Prior on the state before the first observation."""

    mean: float
    variance: float


@dataclass
class StableFit:
    params: StableParams
    loglik: float
    index: pd.Index
    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray
    gain: np.ndarray
    logdens: np.ndarray
    n_obs: int
    aic: float
    bic: float
    converged: bool = True
    degenerate: bool = False
    n_starts_ok: int = 0
    notes: list[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Per-period filter output, one row per month."""
        band = 2.0 * np.sqrt(self.filt_var)
        return pd.DataFrame(
            {
                "month": self.index,
                "pred_mean": self.pred_mean,
                "pred_var": self.pred_var,
                "filt_mean": self.filt_mean,
                "filt_var": self.filt_var,
                "filt_lower": self.filt_mean - band,
                "filt_upper": self.filt_mean + band,
                "gain": self.gain,
                "logdens_stable": self.logdens,
            }
        )


@dataclass(frozen=True)
class SteadyState:
    gain: float
    p_pred: float
    iterations: int
    converged: bool


def information_criteria(loglik: float, k: int, n: int) -> tuple[float, float]:
    """Return (aic, bic) for a log-likelihood with k parameters on n observations."""
    if n < 1:
        raise PreconditionError(f"observation count must be >= 1, got {n}")
    return 2.0 * k - 2.0 * loglik, k * np.log(n) - 2.0 * loglik


def steady_state_gain(
    A: float,
    sigma_eta: float,
    sigma_u: float,
    tol: float = DEFAULT_RICCATI_TOL,
    max_iter: int = DEFAULT_RICCATI_MAX_ITER,
) -> SteadyState:
    """Fixed point of P_pred = A^2 (1 - K) P_pred + sigma_eta^2, K = P_pred / (P_pred + sigma_u^2)."""
    q, r = sigma_eta**2, sigma_u**2
    if q == 0.0:
        return SteadyState(gain=0.0, p_pred=0.0, iterations=0, converged=True)
    if r == 0.0:
        return SteadyState(gain=1.0, p_pred=q, iterations=0, converged=True)

    p_pred = q
    for iteration in range(1, int(max_iter) + 1):
        gain = p_pred / (p_pred + r)
        p_next = A * A * (1.0 - gain) * p_pred + q
        if abs(p_next - p_pred) <= tol * max(1.0, p_pred):
            p_pred = p_next
            return SteadyState(p_pred / (p_pred + r), p_pred, iteration, True)
        p_pred = p_next
    logger.warning("Riccati iteration did not converge after %d steps", max_iter)
    return SteadyState(p_pred / (p_pred + r), p_pred, int(max_iter), False)


def default_init(params: StableParams, series: np.ndarray) -> FilterInit:
    """Stationary prior when |rho| < 0.999, otherwise diffuse."""
    if abs(params.rho) < DEFAULT_STATIONARY_RHO_LIMIT:
        return FilterInit(0.0, params.sigma_eta**2 / (1.0 - params.rho**2))
    scale = float(np.var(series)) if len(series) > 1 else 1.0
    return FilterInit(0.0, DEFAULT_DIFFUSE_SCALE * max(scale, 1.0e-12))


def _variance_path(rho: float, q: float, r: float, p0: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Predictive variance, gain and filtered variance; data-independent."""
    p_pred = np.empty(n)
    gain = np.empty(n)
    p_filt = np.empty(n)
    prev = p0
    settled = n
    for t in range(n):
        pp = rho * rho * prev + q
        s2 = pp + r
        k = pp / s2 if s2 > 0 else 0.0
        pf = (1.0 - k) * pp
        p_pred[t], gain[t], p_filt[t] = pp, k, pf
        if t > 0 and pf == prev:
            settled = t + 1
            p_pred[settled:], gain[settled:], p_filt[settled:] = pp, k, pf
            break
        prev = pf
    return p_pred, gain, p_filt, settled


def _as_series(series) -> tuple[np.ndarray, pd.Index]:
    if isinstance(series, pd.Series):
        values, index = series.to_numpy(dtype=float), series.index
    else:
        values = np.asarray(series, dtype=float)
        index = pd.RangeIndex(len(values))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise PreconditionError(f"non-finite return at t={index[bad[0]]}")
    return values, index


def kalman_filter(series, params: StableParams, init: FilterInit | None = None) -> StableFit:
    """Run the scalar Kalman recursion and collect one-step predictive densities."""
    f, index = _as_series(series)
    n = len(f)
    if n < 2:
        raise PreconditionError(f"series length must be >= 2, got {n}")
    init = init or default_init(params, f)
    rho = params.rho
    r = params.sigma_u**2
    p_pred, gain, p_filt, settled = _variance_path(rho, params.sigma_eta**2, r, init.variance, n)
    pred_var = p_pred + r
    if np.any(pred_var <= 0):
        raise PreconditionError("predictive variance is zero; sigma_u and sigma_eta cannot both vanish")

    filt_mean = np.empty(n)
    prev = init.mean
    for t in range(settled):
        prev = (1.0 - gain[t]) * rho * prev + gain[t] * f[t]
        filt_mean[t] = prev
    if settled < n:
        # time-invariant tail: lambda_t = (1-K) rho lambda_{t-1} + K f_t
        a, k = (1.0 - gain[-1]) * rho, gain[-1]
        filt_mean[settled:], _ = signal.lfilter([k], [1.0, -a], f[settled:], zi=[a * prev])

    pred_mean = rho * np.concatenate(([init.mean], filt_mean[:-1]))
    logdens = -0.5 * (LOG_2PI + np.log(pred_var) + (f - pred_mean) ** 2 / pred_var)
    loglik = float(np.sum(logdens))
    aic, bic = information_criteria(loglik, STABLE_PARAM_COUNT, n)
    return StableFit(
        params=params,
        loglik=loglik,
        index=index,
        pred_mean=pred_mean,
        pred_var=pred_var,
        filt_mean=filt_mean,
        filt_var=p_filt,
        gain=gain,
        logdens=logdens,
        n_obs=n,
        aic=aic,
        bic=bic,
    )


# ===== ESTIMATION =====


def _to_params(theta: np.ndarray, floor: float) -> StableParams:
    return StableParams(
        rho=float(np.tanh(theta[0])),
        sigma_u=floor + float(np.exp(theta[1])),
        sigma_eta=floor + float(np.exp(theta[2])),
    )


def _to_theta(params: StableParams, floor: float) -> np.ndarray:
    return np.array(
        [
            np.arctanh(np.clip(params.rho, -0.999999, 0.999999)),
            np.log(max(params.sigma_u - floor, floor)),
            np.log(max(params.sigma_eta - floor, floor)),
        ]
    )


def start_points(series: np.ndarray, n_starts: int) -> list[StableParams]:
    """Moment-based starts: rho grid times splits of the sample variance."""
    var = max(float(np.var(series, ddof=1)), 1e-12)
    starts = []
    for split in (0.8, 0.5, 0.2, 0.95):
        for rho in (0.0, 0.3, 0.6, -0.3):
            sigma_u = np.sqrt(split * var)
            sigma_eta = np.sqrt((1.0 - split) * var * (1.0 - rho**2))
            starts.append(StableParams(rho, sigma_u, sigma_eta))
    return starts[: max(1, n_starts)]


def _negloglik(theta: np.ndarray, f: np.ndarray, floor: float) -> float:
    try:
        value = -kalman_filter(f, _to_params(theta, floor)).loglik
    except (PreconditionError, FloatingPointError, OverflowError):
        return _PENALTY
    return value if np.isfinite(value) else _PENALTY


def is_degenerate(params: StableParams, floor: float) -> bool:
    limit = DEFAULT_DEGENERATE_SD_MULTIPLE * floor
    return params.sigma_u <= limit or params.sigma_eta <= limit


def fit_stable_mle(
    series,
    min_obs: int = DEFAULT_STABLE_MIN_OBS,
    n_starts: int = DEFAULT_STABLE_STARTS,
    sd_floor: float = DEFAULT_SD_FLOOR,
    tol: float = DEFAULT_OPTIMIZER_TOL,
) -> StableFit:
    """Maximum likelihood for (rho, sigma_u, sigma_eta) with multi-start simplex and a BFGS polish.

    Raises:
        PreconditionError: fewer than ``min_obs`` observations
        EstimationError: no start converged; carries the best point found
    """
    f, index = _as_series(series)
    if len(f) < min_obs:
        raise PreconditionError(f"stable model needs >= {min_obs} observations, got {len(f)}")

    if np.ptp(f) == 0.0:
        params = StableParams(0.0, sd_floor, sd_floor)
        fit = kalman_filter(pd.Series(f, index=index), params)
        fit.degenerate = True
        fit.converged = False
        fit.notes.append("constant series")
        logger.warning("constant series; stable fit pinned at the s.d. floor")
        return fit

    best_theta, best_value, n_ok = None, np.inf, 0
    for start in start_points(f, n_starts):
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
        best_point = _to_params(best_theta, sd_floor).as_dict() if best_theta is not None else None
        raise EstimationError(
            "stable model: no optimizer start converged",
            best_point=best_point,
            best_value=None if best_theta is None else -best_value,
        )

    polish = optimize.minimize(_negloglik, best_theta, args=(f, sd_floor), method="BFGS", options={"gtol": 1e-6})
    if np.isfinite(polish.fun) and polish.fun < best_value:
        best_theta = polish.x

    params = _to_params(best_theta, sd_floor)
    fit = kalman_filter(pd.Series(f, index=index), params)
    fit.n_starts_ok = n_ok
    fit.degenerate = is_degenerate(params, sd_floor)
    if fit.degenerate:
        fit.notes.append("s.d. at floor")
        logger.warning("stable fit has a standard deviation at the floor")
    return fit
