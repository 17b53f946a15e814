"""Factor Mislearning - misspecified learning about factor premia, measured and tested."""

from .break_model import fit_break_mle, hamilton_filter
from .config import PipelineConfig, load_pipeline_config
from .cross_section import decompose
from .data_io import load_returns
from .mislearning import build_mislearning_panel, compute_delta
from .regress import RegressionSpec, run_regression
from .stable_filter import fit_stable_mle, kalman_filter

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "RegressionSpec",
    "build_mislearning_panel",
    "compute_delta",
    "decompose",
    "fit_break_mle",
    "fit_stable_mle",
    "hamilton_filter",
    "kalman_filter",
    "load_pipeline_config",
    "load_returns",
    "run_regression",
]
