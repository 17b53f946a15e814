"""
CSV ingestion and the canonical long-format return panel.

Returns are decimals everywhere inside the package; percent only appears at
the file boundary. Months absent from a series are simply missing rows.
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataFormatError, DuplicateObservationError, EmptySampleError, PreconditionError
from .months import parse_period

logger = logging.getLogger(__name__)

PANEL_COLUMNS = ["series", "month", "ret"]


@dataclass(frozen=True)
class ReturnPanel:
    """Monthly observations keyed by (series, month), sorted within series."""

    frame: pd.DataFrame
    metadata: dict[str, str | None] = field(default_factory=dict)

    def __post_init__(self):
        frame = self.frame.loc[:, PANEL_COLUMNS].copy()
        frame["series"] = frame["series"].astype(str)
        frame["month"] = pd.PeriodIndex(frame["month"], freq="M")
        frame["ret"] = frame["ret"].astype(float)
        dup = frame.duplicated(["series", "month"], keep=False)
        if dup.any():
            first = frame.loc[dup].iloc[0]
            raise DuplicateObservationError(first["series"], str(first["month"]))
        frame = frame.sort_values(["series", "month"], kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "frame", frame)

    @property
    def series_ids(self) -> list[str]:
        return sorted(self.frame["series"].unique())

    def __len__(self) -> int:
        return len(self.frame)

    def get(self, series_id: str) -> pd.Series:
        """Returns of one series indexed by month."""
        rows = self.frame.loc[self.frame["series"] == series_id]
        if rows.empty:
            raise PreconditionError(f"series '{series_id}' not in panel")
        return pd.Series(rows["ret"].to_numpy(), index=pd.PeriodIndex(rows["month"]), name=series_id)

    def counts(self) -> pd.Series:
        return self.frame.groupby("series").size()

    def to_wide(self) -> pd.DataFrame:
        return self.frame.pivot(index="month", columns="series", values="ret").sort_index()

    def family(self, series_id: str) -> str | None:
        return self.metadata.get(series_id)

    def select(self, series: Iterable[str]) -> "ReturnPanel":
        wanted = set(series)
        missing = sorted(wanted - set(self.series_ids))
        if missing:
            raise PreconditionError(f"series not in panel: {', '.join(missing)}")
        frame = self.frame.loc[self.frame["series"].isin(wanted)]
        meta = {k: v for k, v in self.metadata.items() if k in wanted}
        return ReturnPanel(frame, meta)


@dataclass(frozen=True)
class ExogenousSeries:
    """One value per month, e.g. a passive ownership share."""

    values: pd.Series

    def __post_init__(self):
        values = self.values.astype(float)
        if values.index.has_duplicates:
            month = values.index[values.index.duplicated()][0]
            raise DuplicateObservationError("exogenous", str(month))
        object.__setattr__(self, "values", values.sort_index())

    def __len__(self) -> int:
        return len(self.values)


def _scale(unit: str) -> float:
    if unit == "percent":
        return 0.01
    if unit == "decimal":
        return 1.0
    raise PreconditionError(f"unit must be 'percent' or 'decimal', got '{unit}'")


def _read_raw(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    raw = pd.read_csv(
        path, dtype=str, header=None, skipinitialspace=True, keep_default_na=False, encoding="utf-8"
    )
    if raw.empty:
        raise DataFormatError(f"{path} has no header row", line=1)
    header = [str(h).strip() for h in raw.iloc[0]]
    if len(set(header)) != len(header):
        raise DataFormatError(f"duplicate column names in header: {header}", line=1)
    body = raw.iloc[1:].copy()
    body.columns = header
    # file line numbers: header is line 1
    body.index = np.arange(2, len(body) + 2)
    return body


def _parse_month(token: str, line: int) -> pd.Period:
    try:
        return parse_period(token)
    except ValueError as e:
        raise DataFormatError(str(e), line=line) from e


def _parse_number(token: str, line: int, column: str) -> float:
    try:
        value = float(token)
    except ValueError as e:
        raise DataFormatError(f"unparseable number '{token}' in column '{column}'", line=line) from e
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value in column '{column}'", line=line)
    return value


def load_returns(
    path: str | Path,
    layout: str = "wide",
    unit: str = "percent",
    metadata: dict[str, str | None] | None = None,
) -> ReturnPanel:
    """Load a wide (``date,<s1>,<s2>...``) or long (``series,date,ret``) return CSV.

    Raises:
        DataFormatError: unparseable date or number, with the file line number
        DuplicateObservationError: two rows for the same (series, month)
    """
    scale = _scale(unit)
    body = _read_raw(path)
    records: list[tuple[str, pd.Period, float, int]] = []

    if layout == "long":
        missing = [c for c in ("series", "date", "ret") if c not in body.columns]
        if missing:
            raise DataFormatError(f"long layout needs columns series,date,ret; missing {missing}", line=1)
        for line, row in body.iterrows():
            if not row["ret"].strip():
                continue
            month = _parse_month(row["date"], line)
            records.append((row["series"].strip(), month, _parse_number(row["ret"], line, "ret") * scale, line))
    elif layout == "wide":
        date_col, series_cols = body.columns[0], list(body.columns[1:])
        if not series_cols:
            raise DataFormatError("wide layout needs at least one series column", line=1)
        for line, row in body.iterrows():
            month = _parse_month(row[date_col], line)
            for column in series_cols:
                token = row[column].strip()
                if token:
                    records.append((column, month, _parse_number(token, line, column) * scale, line))
    else:
        raise PreconditionError(f"layout must be 'wide' or 'long', got '{layout}'")

    seen: dict[tuple[str, pd.Period], int] = {}
    for series_id, month, _, line in records:
        key = (series_id, month)
        if key in seen:
            raise DuplicateObservationError(series_id, str(month), line=line)
        seen[key] = line

    frame = pd.DataFrame(
        [(s, m, r) for s, m, r, _ in records], columns=PANEL_COLUMNS
    ).astype({"ret": float})
    panel = ReturnPanel(frame, dict(metadata or {}))
    logger.debug("loaded %d observations for %d series from %s", len(panel), len(panel.series_ids), path)
    return panel


def load_metadata(path: str | Path) -> dict[str, str | None]:
    """Read an optional ``series,family`` label file."""
    body = _read_raw(path)
    if "series" not in body.columns or "family" not in body.columns:
        raise DataFormatError("metadata needs columns series,family", line=1)
    return {row["series"].strip(): (row["family"].strip() or None) for _, row in body.iterrows()}


def load_exogenous(path: str | Path, unit: str = "decimal") -> ExogenousSeries:
    """Load a ``date,value`` CSV such as the passive ownership share."""
    scale = _scale(unit)
    body = _read_raw(path)
    if list(body.columns[:2]) != ["date", "value"]:
        raise DataFormatError("exogenous layout needs columns date,value", line=1)
    months, values, seen = [], [], {}
    for line, row in body.iterrows():
        if not row["value"].strip():
            continue
        month = _parse_month(row["date"], line)
        if month in seen:
            raise DuplicateObservationError("exogenous", str(month), line=line)
        seen[month] = line
        months.append(month)
        values.append(_parse_number(row["value"], line, "value") * scale)
    return ExogenousSeries(pd.Series(values, index=pd.PeriodIndex(months, freq="M"), name="value"))


def write_panel(panel: ReturnPanel, path: str | Path, unit: str = "decimal") -> Path:
    """Write a long ``series,date,ret`` CSV that ``load_returns(layout='long')`` reads back."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = pd.DataFrame(
        {
            "series": panel.frame["series"],
            "date": panel.frame["month"].astype(str),
            "ret": panel.frame["ret"] / _scale(unit),
        }
    )
    out.to_csv(path, index=False, float_format="%.17g")
    return path


def align_common_sample(panel: ReturnPanel, series: Iterable[str]) -> ReturnPanel:
    """Keep the requested series on the months where all of them are observed.

    Raises:
        PreconditionError: a requested series is absent
        EmptySampleError: the months do not intersect
    """
    subset = panel.select(series)
    wanted = subset.series_ids
    months = subset.frame.groupby("month")["series"].nunique()
    common = months.index[months == len(wanted)]
    if len(common) == 0:
        raise EmptySampleError(f"no month is common to series {', '.join(wanted)}")
    frame = subset.frame.loc[subset.frame["month"].isin(common)]
    return ReturnPanel(frame, subset.metadata)


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write an output table; months become ``YYYY-MM`` text and floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = frame.copy()
    for column in out.columns:
        if isinstance(out[column].dtype, pd.PeriodDtype):
            out[column] = out[column].astype(str)
    if "month" in out.columns:
        out = out.rename(columns={"month": "date"})
    out.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_table(path: str | Path) -> pd.DataFrame:
    """Read a table written by ``write_table``; a ``date`` column comes back as monthly periods."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"table not found: {path}")
    frame = pd.read_csv(path)
    if "date" in frame.columns:
        frame = frame.rename(columns={"date": "month"})
        frame["month"] = pd.PeriodIndex([parse_period(str(m)) for m in frame["month"]], freq="M")
    return frame
