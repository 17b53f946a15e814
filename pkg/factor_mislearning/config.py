"""
Configuration constants for the factor mislearning pipeline.
Centralized defaults plus the INI-style pipeline configuration file.
"""

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, get_type_hints

from .errors import ConfigError

# Estimation configuration
DEFAULT_SD_FLOOR = 1e-8  # Lower bound on every estimated standard deviation
DEFAULT_OPTIMIZER_TOL = 1e-8  # Relative tolerance for the simplex optimizer
DEFAULT_OPTIMIZER_MAXITER = 20000  # Simplex iteration cap per start
DEFAULT_STABLE_MIN_OBS = 24  # Shortest series the stable model is fitted on
DEFAULT_BREAK_MIN_OBS = 48  # Shortest series the regime model is fitted on
DEFAULT_STABLE_STARTS = 8  # Multi-start count for the stable model
DEFAULT_BREAK_STARTS = 12  # Multi-start count for the regime model
DEFAULT_STATIONARY_RHO_LIMIT = 0.999  # Beyond this |rho| the state prior is diffuse
DEFAULT_DIFFUSE_SCALE = 1e7  # Diffuse prior variance as a multiple of var(series)
DEFAULT_DEGENERATE_SD_MULTIPLE = 10.0  # s.d. within this multiple of the floor is degenerate
DEFAULT_DEGENERATE_STAY_PROB = 0.9999  # Self-transition above this is degenerate
DEFAULT_REFIT_EVERY = 12  # Months between refits in expanding-window mode

# Riccati configuration
DEFAULT_RICCATI_TOL = 1e-12  # Fixed-point tolerance on the predictive variance
DEFAULT_RICCATI_MAX_ITER = 100_000  # Iteration cap for the fixed point

# Mislearning configuration
DEFAULT_ROLLING_WINDOW = 6  # Months in the rolling mean of delta
DEFAULT_SPIKE_QUANTILE = 0.9  # Pooled quantile defining a delta spike
DEFAULT_BREAK_THRESHOLD = 0.5  # Filtered probability classifying a break state

# Outcome and regression configuration
DEFAULT_HORIZONS = (3, 6, 12)  # Forward horizons in months
DEFAULT_OUTCOMES = ("sharpe", "cumret", "vol", "downside_vol", "max_dd", "failure")
DEFAULT_FAILURE_QUANTILE = 0.05  # Per-series tail quantile for the failure indicator
DEFAULT_CONTROLS_WINDOW = 12  # Lagged rolling-volatility window for controls
DEFAULT_ESTIMATOR = "nw"  # Covariance estimator for the baseline suite
DEFAULT_NW_LAG = "horizon"  # Newey-West lag rule: "horizon" or an integer
DEFAULT_MAX_HORIZON = 60  # Longest admissible forward horizon

# Passive-ownership configuration
DEFAULT_HP_LAMBDA = 129_600.0  # Monthly smoothing for the one-sided HP filter
DEFAULT_PASSIVE_HORIZON = 12  # Horizon of the outcome-mapping interaction
DEFAULT_PASSIVE_OUTCOME = "cumret"  # Outcome of the outcome-mapping interaction

# Cross-section configuration
DEFAULT_IVOL_SCALE = 100.0  # Decimal to percent-per-month for IVOL tables
DEFAULT_IVOL_MIN_OBS = 36  # Overlapping months required for IVOL
DEFAULT_TERTILE_MIN_ROWS = 9  # Rows required for the tertile analysis
DEFAULT_XSEC_MIN_ROWS = 10  # Rows required for cross-sectional regressions
DEFAULT_MU0_TOLERANCE = 0.05  # Spread of mu0 accepted as "common"

# Simulation configuration
DEFAULT_SIM_PATHS = 100_000  # Monte Carlo paths for post-break error checks
DEFAULT_SIM_REPLICATIONS = 10_000  # Replications for the jump-size sweep
DEFAULT_SPIKE_PATHS = 500  # Paths in the delta spike experiment

# Run configuration
DEFAULT_SEED = 0
DEFAULT_THREADS = 1
DEFAULT_OUTPUT_DIR = "results"

LAYOUTS = ("wide", "long")
UNITS = ("percent", "decimal")
ESTIMATORS = (
    "classic",
    "hc3",
    "nw",
    "cluster_time",
    "cluster_series",
    "cluster_twoway",
)
OUTCOMES = DEFAULT_OUTCOMES + ("vol_ratio",)
ROBUSTNESS_METHODS = ("none", "winsorize", "trim", "drop_top")


@dataclass(frozen=True)
class DataSettings:
    returns: Path | None = None
    returns_layout: str = "wide"
    returns_unit: str = "percent"
    series: tuple[str, ...] = ()
    sample_name: str = "sample"
    market_series: str = "MKT"
    common_sample: bool = False
    metadata: Path | None = None
    anomalies: Path | None = None
    anomalies_layout: str = "long"
    anomalies_unit: str = "decimal"
    factors: Path | None = None
    factors_layout: str = "wide"
    factors_unit: str = "percent"
    ivol_factors: tuple[str, ...] = ("MKT", "SMB", "HML")
    passive: Path | None = None
    passive_unit: str = "decimal"


@dataclass(frozen=True)
class FitSettings:
    stable_min_obs: int = DEFAULT_STABLE_MIN_OBS
    break_min_obs: int = DEFAULT_BREAK_MIN_OBS
    stable_starts: int = DEFAULT_STABLE_STARTS
    break_starts: int = DEFAULT_BREAK_STARTS
    sd_floor: float = DEFAULT_SD_FLOOR
    tolerance: float = DEFAULT_OPTIMIZER_TOL
    expanding_window: bool = False
    refit_every: int = DEFAULT_REFIT_EVERY


@dataclass(frozen=True)
class MislearningSettings:
    rolling_window: int = DEFAULT_ROLLING_WINDOW
    spike_quantile: float = DEFAULT_SPIKE_QUANTILE
    break_threshold: float = DEFAULT_BREAK_THRESHOLD


@dataclass(frozen=True)
class RegressSettings:
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    outcomes: tuple[str, ...] = DEFAULT_OUTCOMES
    failure_quantile: float = DEFAULT_FAILURE_QUANTILE
    controls_window: int = DEFAULT_CONTROLS_WINDOW
    estimator: str = DEFAULT_ESTIMATOR
    nw_lag: str = DEFAULT_NW_LAG
    cluster_correction: bool = True
    inference_sweep: bool = True
    robustness: str = "none"
    robustness_fraction: float = 0.01
    passive_variants: tuple[str, ...] = ("onset", "outcome")
    passive_fe: tuple[str, ...] = ("series", "series+month")
    passive_estimator: str = "cluster_twoway"
    passive_horizon: int = DEFAULT_PASSIVE_HORIZON
    passive_outcome: str = DEFAULT_PASSIVE_OUTCOME
    passive_detrend: bool = False
    passive_exclude: tuple[str, ...] = ()
    hp_lambda: float = DEFAULT_HP_LAMBDA
    leave_one_year_out: bool = False


@dataclass(frozen=True)
class XsecSettings:
    ivol_scale: float = DEFAULT_IVOL_SCALE
    ivol_min_obs: int = DEFAULT_IVOL_MIN_OBS
    mu0_tolerance: float = DEFAULT_MU0_TOLERANCE
    rank_columns: tuple[str, ...] = ("pi", "e_delta", "mu1", "spike_freq")


@dataclass(frozen=True)
class SimulateSettings:
    A: float = 0.9
    sigma_eta: float = 0.1
    sigma_u: float = 1.0
    p: float = 0.02
    mu_J: float = 1.0
    sigma_J: float = 0.5
    T: int = 600
    lambda0: float = 0.0
    believed_sigma_eta: float = 0.05
    post_break_gain: float = 0.2
    post_break_A: float = 0.9
    horizons: tuple[int, ...] = (0, 1, 5, 10)
    mc_paths: int = DEFAULT_SIM_PATHS
    replications: int = DEFAULT_SIM_REPLICATIONS
    spike_paths: int = DEFAULT_SPIKE_PATHS
    gamma: float = 2.0
    supply_bar: float = 1.0
    supply_sd: float = 0.0
    supply_shift_time: int = 100
    supply_shift_size: float = 1.0
    eq_sigma_u: float = 0.2
    sweep_horizon: int = 12


@dataclass(frozen=True)
class RunSettings:
    seed: int = DEFAULT_SEED
    threads: int = DEFAULT_THREADS
    out: Path = Path(DEFAULT_OUTPUT_DIR)


@dataclass(frozen=True)
class PipelineConfig:
    """Every setting the subcommands read, grouped by config section."""

    data: DataSettings = field(default_factory=DataSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    mislearning: MislearningSettings = field(default_factory=MislearningSettings)
    regress: RegressSettings = field(default_factory=RegressSettings)
    xsec: XsecSettings = field(default_factory=XsecSettings)
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    run: RunSettings = field(default_factory=RunSettings)

    def nw_lag_for(self, horizon: int) -> int:
        if self.regress.nw_lag == "horizon":
            return horizon
        return int(self.regress.nw_lag)


SECTIONS: dict[str, type] = {
    "data": DataSettings,
    "fit": FitSettings,
    "mislearning": MislearningSettings,
    "regress": RegressSettings,
    "xsec": XsecSettings,
    "simulate": SimulateSettings,
    "run": RunSettings,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: '{text}'")


def _split(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


_PARSERS: dict[Any, Any] = {
    int: int,
    float: float,
    bool: _parse_bool,
    str: str.strip,
    Path: lambda text: Path(text.strip()),
    Path | None: lambda text: Path(text.strip()) if text.strip() else None,
    tuple[str, ...]: lambda text: tuple(_split(text)),
    tuple[int, ...]: lambda text: tuple(int(item) for item in _split(text)),
}


def _parse_section(name: str, cls: type, items: dict[str, str]) -> Any:
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    values: dict[str, Any] = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
        try:
            values[key] = _PARSERS[hints[key]](raw)
        except ValueError as e:
            raise ConfigError(f"{name}.{key}", f"invalid value '{raw}' ({e})") from e
    return cls(**values)


def _check(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(key, message)


def check_ranges(cfg: PipelineConfig) -> None:
    """Raise ConfigError for the first numeric or enumerated field out of range."""
    d, f, m, r, x, s = cfg.data, cfg.fit, cfg.mislearning, cfg.regress, cfg.xsec, cfg.simulate
    _check(d.returns_layout in LAYOUTS, "data.returns_layout", f"must be one of {LAYOUTS}")
    _check(d.anomalies_layout in LAYOUTS, "data.anomalies_layout", f"must be one of {LAYOUTS}")
    _check(d.factors_layout in LAYOUTS, "data.factors_layout", f"must be one of {LAYOUTS}")
    for key in ("returns_unit", "anomalies_unit", "factors_unit", "passive_unit"):
        _check(getattr(d, key) in UNITS, f"data.{key}", f"must be one of {UNITS}")
    _check(len(d.ivol_factors) == 3, "data.ivol_factors", "needs exactly three factor names")
    _check(f.stable_min_obs >= 2, "fit.stable_min_obs", "must be >= 2")
    _check(f.break_min_obs >= 2, "fit.break_min_obs", "must be >= 2")
    _check(f.stable_starts >= 1, "fit.stable_starts", "must be >= 1")
    _check(f.break_starts >= 1, "fit.break_starts", "must be >= 1")
    _check(f.sd_floor > 0, "fit.sd_floor", "must be > 0")
    _check(f.tolerance > 0, "fit.tolerance", "must be > 0")
    _check(f.refit_every >= 1, "fit.refit_every", "must be >= 1")
    _check(m.rolling_window >= 1, "mislearning.rolling_window", "must be >= 1")
    _check(0 < m.spike_quantile < 1, "mislearning.spike_quantile", "must be in (0, 1)")
    _check(0 < m.break_threshold < 1, "mislearning.break_threshold", "must be in (0, 1)")
    _check(
        all(1 <= h <= DEFAULT_MAX_HORIZON for h in r.horizons) and bool(r.horizons),
        "regress.horizons",
        f"must be nonempty and within 1..{DEFAULT_MAX_HORIZON}",
    )
    unknown = [o for o in r.outcomes if o not in OUTCOMES]
    _check(not unknown, "regress.outcomes", f"unknown outcomes {unknown}")
    _check(0 < r.failure_quantile < 1, "regress.failure_quantile", "must be in (0, 1)")
    _check(r.controls_window >= 2, "regress.controls_window", "must be >= 2")
    _check(r.estimator in ESTIMATORS, "regress.estimator", f"must be one of {ESTIMATORS}")
    _check(
        r.nw_lag == "horizon" or (r.nw_lag.isdigit() and int(r.nw_lag) >= 0),
        "regress.nw_lag",
        "must be 'horizon' or a nonnegative integer",
    )
    _check(
        r.robustness in ROBUSTNESS_METHODS,
        "regress.robustness",
        f"must be one of {ROBUSTNESS_METHODS}",
    )
    _check(0 < r.robustness_fraction < 0.5, "regress.robustness_fraction", "must be in (0, 0.5)")
    _check(
        set(r.passive_variants) <= {"onset", "outcome"},
        "regress.passive_variants",
        "allowed: onset, outcome",
    )
    _check(
        set(r.passive_fe) <= {"series", "series+month"},
        "regress.passive_fe",
        "allowed: series, series+month",
    )
    _check(r.passive_estimator in ESTIMATORS, "regress.passive_estimator", f"must be one of {ESTIMATORS}")
    _check(r.passive_outcome in OUTCOMES, "regress.passive_outcome", "unknown outcome")
    _check(1 <= r.passive_horizon <= DEFAULT_MAX_HORIZON, "regress.passive_horizon", "out of range")
    _check(r.hp_lambda > 0, "regress.hp_lambda", "must be > 0")
    for window in r.passive_exclude:
        _check(":" in window, "regress.passive_exclude", f"'{window}' is not START:END")
    _check(x.ivol_scale > 0, "xsec.ivol_scale", "must be > 0")
    _check(x.ivol_min_obs >= 5, "xsec.ivol_min_obs", "must be >= 5")
    _check(x.mu0_tolerance >= 0, "xsec.mu0_tolerance", "must be >= 0")
    _check(abs(s.A) < 1, "simulate.A", "must satisfy |A| < 1")
    _check(abs(s.post_break_A) < 1, "simulate.post_break_A", "must satisfy |A| < 1")
    for key in ("sigma_eta", "sigma_u", "sigma_J", "believed_sigma_eta", "supply_sd"):
        _check(getattr(s, key) >= 0, f"simulate.{key}", "must be >= 0")
    _check(0 <= s.p <= 1, "simulate.p", "must be in [0, 1]")
    _check(0 < s.post_break_gain <= 1, "simulate.post_break_gain", "must be in (0, 1]")
    _check(s.T >= 1, "simulate.T", "must be >= 1")
    _check(s.gamma > 0, "simulate.gamma", "must be > 0")
    _check(s.eq_sigma_u > 0, "simulate.eq_sigma_u", "must be > 0")
    _check(s.mc_paths >= 2, "simulate.mc_paths", "must be >= 2")
    _check(s.replications >= 1, "simulate.replications", "must be >= 1")
    _check(s.spike_paths >= 1, "simulate.spike_paths", "must be >= 1")
    _check(s.sweep_horizon >= 1, "simulate.sweep_horizon", "must be >= 1")
    _check(1 <= s.supply_shift_time <= s.T, "simulate.supply_shift_time", "must lie in 1..T")
    _check(cfg.run.seed >= 0, "run.seed", "must be >= 0")
    _check(cfg.run.threads >= 1, "run.threads", "must be >= 1")


def load_pipeline_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> PipelineConfig:
    """Read an INI pipeline config and apply ``run`` overrides from the command line.

    Raises:
        ConfigError: unknown section or key, unparseable value, value out of range
    """
    sections: dict[str, Any] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep key case (simulate.A, mu_J)
        try:
            with open(path, encoding="utf-8") as handle:
                parser.read_file(handle)
        except FileNotFoundError as e:
            raise ConfigError("config", f"file not found: {path}") from e
        except configparser.Error as e:
            raise ConfigError("config", str(e)) from e
        for name in parser.sections():
            if name not in SECTIONS:
                raise ConfigError(name, "unknown section")
            sections[name] = _parse_section(name, SECTIONS[name], dict(parser[name]))

    cfg = PipelineConfig(**sections)
    run_overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if run_overrides:
        if "out" in run_overrides:
            run_overrides["out"] = Path(run_overrides["out"])
        cfg = replace(cfg, run=replace(cfg.run, **run_overrides))
    check_ranges(cfg)
    return cfg


def missing_paths(cfg: PipelineConfig) -> list[str]:
    """Configured input files that do not exist."""
    missing = []
    for name in ("returns", "metadata", "anomalies", "factors", "passive"):
        value = getattr(cfg.data, name)
        if value is not None and not Path(value).exists():
            missing.append(f"data.{name} = {value}")
    return missing


# Validation functions
def validate_config(cfg: PipelineConfig) -> bool:
    """Validate that all referenced input files exist."""
    missing = missing_paths(cfg)
    if missing:
        print(f"Configuration error: missing input files: {', '.join(missing)}")
        return False
    return True
