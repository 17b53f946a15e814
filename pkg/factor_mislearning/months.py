"""Monthly calendar backbone shared by every panel."""

import re
from dataclasses import dataclass

import pandas as pd

_YYYYMM = re.compile(r"^(\d{4})(\d{2})$")
_YYYY_MM = re.compile(r"^(\d{4})-(\d{2})$")


@dataclass(frozen=True, order=True)
class MonthIndex:
    """A calendar month; ordering is chronological."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "MonthIndex":
        """Parse ``YYYYMM`` or ``YYYY-MM``."""
        token = str(text).strip()
        match = _YYYYMM.match(token) or _YYYY_MM.match(token)
        if match is None:
            raise ValueError(f"unparseable month '{text}' (expected YYYYMM or YYYY-MM)")
        return cls(int(match.group(1)), int(match.group(2)))

    @classmethod
    def from_period(cls, period: pd.Period) -> "MonthIndex":
        return cls(period.year, period.month)

    def to_period(self) -> pd.Period:
        return pd.Period(year=self.year, month=self.month, freq="M")

    @property
    def ordinal(self) -> int:
        return self.year * 12 + (self.month - 1)

    def successor(self) -> "MonthIndex":
        return self.shift(1)

    def shift(self, months: int) -> "MonthIndex":
        year, month = divmod(self.ordinal + months, 12)
        return MonthIndex(year, month + 1)

    def __sub__(self, other: "MonthIndex") -> int:
        return self.ordinal - other.ordinal

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def parse_period(text: str) -> pd.Period:
    """Parse a month token straight into a monthly ``pd.Period``."""
    return MonthIndex.parse(text).to_period()
