"""
pytest configuration file
Shared fixtures and settings for all tests
"""

import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from factor_mislearning.config import FitSettings  # noqa: E402
from factor_mislearning.data_io import ReturnPanel  # noqa: E402
from factor_mislearning.simulate import rng_for  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')")
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
    config.addinivalue_line("markers", "unit: marks tests as unit tests")


# Test data fixtures
@pytest.fixture
def rng():
    """Seeded generator shared by oracle tests"""
    return rng_for(12345, 0)


@pytest.fixture
def quick_fit_settings():
    """Few optimizer starts so fitting tests stay fast"""
    return FitSettings(stable_min_obs=24, break_min_obs=48, stable_starts=2, break_starts=3, tolerance=1e-6)


def make_panel(series: dict[str, np.ndarray], start: str = "2000-01") -> ReturnPanel:
    """Long panel from per-series decimal returns starting at the same month"""
    rows = []
    for series_id, values in series.items():
        months = pd.period_range(start, periods=len(values), freq="M")
        rows.append(pd.DataFrame({"series": series_id, "month": months, "ret": values}))
    return ReturnPanel(pd.concat(rows, ignore_index=True))


@pytest.fixture
def panel_factory():
    """Builder for small synthetic panels"""
    return make_panel


@pytest.fixture
def regime_panel():
    """Three series with calm and turbulent stretches, 150 months each"""
    series = {}
    for i, name in enumerate(("HML", "MKT", "SMB")):
        rng = rng_for(7, i)
        sd = np.where((np.arange(150) // 30) % 2 == 1, 0.06, 0.02)
        series[name] = 0.004 + rng.normal(0.0, 1.0, 150) * sd
    return make_panel(series)


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV file under tmp_path and return its path"""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text.strip() + "\n", encoding="utf-8")
        return path

    return _write
