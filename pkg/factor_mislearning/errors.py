"""Exception hierarchy for the factor mislearning pipeline."""

from typing import Any


class MislearningError(Exception):
    """Base class for every error raised by the pipeline."""


class ConfigError(MislearningError, ValueError):
    """A configuration key is unknown, missing or out of range."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DataFormatError(MislearningError, ValueError):
    """An input file row cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DuplicateObservationError(DataFormatError):
    """Two rows share the same (series, month) key."""

    def __init__(self, series_id: str, month: str, line: int | None = None):
        self.series_id = series_id
        self.month = month
        super().__init__(f"duplicate observation for ({series_id}, {month})", line)


class EmptySampleError(MislearningError, ValueError):
    """A sample restriction left no observations."""


class AlignmentError(MislearningError, ValueError):
    """Two per-period sequences do not share a timeline."""

    def __init__(self, months: list[str]):
        self.months = months
        shown = ", ".join(months[:10])
        more = f" (+{len(months) - 10} more)" if len(months) > 10 else ""
        super().__init__(f"timelines differ at months: {shown}{more}")


class PreconditionError(MislearningError, ValueError):
    """An operation was called with inputs outside its domain."""


class EstimationError(MislearningError, RuntimeError):
    """Every optimizer start failed; carries the best point found."""

    def __init__(
        self,
        message: str,
        best_point: dict[str, Any] | None = None,
        best_value: float | None = None,
    ):
        self.best_point = best_point
        self.best_value = best_value
        super().__init__(message)


class RankDeficiencyError(MislearningError, ValueError):
    """The design matrix is rank deficient after demeaning."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")


class InsufficientClustersError(MislearningError, ValueError):
    """Clustered inference needs at least two clusters."""


class NumericalError(MislearningError, ArithmeticError):
    """A recursion produced a non-finite or degenerate value."""
