"""Console output for the mislearning pipeline"""

import logging
from typing import Any

import pandas as pd
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

# Global console instance
console = Console()

THEME = {
    "primary": "cyan",
    "accent": "yellow",
    "success": "green",
    "pass": "green",
    "fail": "red",
    "error": "red",
    "warning": "yellow",
    "skip": "yellow",
    "header": "blue",
    "neutral": "white",
    "muted": "dim white",
}


def setup_logging(verbose: bool = False) -> None:
    """Route library loggers through rich"""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False, markup=False)],
        force=True,
    )


def create_header(title: str, subtitle: str = "") -> Panel:
    """Create clean header panel"""
    content = title
    if subtitle:
        content += f"\n{subtitle}"
    return Panel(content, style=f"bold {THEME['header']}", padding=(0, 1))


def print_colored(label: str, message: str, color: str | None = None) -> None:
    """Print colored message with label"""
    if color is None:
        color = THEME.get(label.lower(), THEME["neutral"])
    console.print(f"[{color}][{label}][/{color}] {message}")


def print_phase_header(title: str, subtitle: str = "") -> None:
    """Print phase header"""
    console.print(create_header(title, subtitle))


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        if pd.isna(value):
            return ""
        return f"{value:.4f}"
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(value)


def create_frame_table(frame: pd.DataFrame, title: str = "", max_rows: int = 30) -> Table:
    """Create compact table from a DataFrame"""
    table = Table(title=title or None, style=THEME["primary"], header_style="bold")
    for column in frame.columns:
        justify = "right" if pd.api.types.is_numeric_dtype(frame[column]) else "left"
        table.add_column(str(column), justify=justify)
    for row in frame.head(max_rows).itertuples(index=False):
        table.add_row(*(_format_cell(value) for value in row))
    if len(frame) > max_rows:
        table.caption = f"... and {len(frame) - max_rows} more rows"
    return table


def print_frame(frame: pd.DataFrame, title: str = "", max_rows: int = 30) -> None:
    """Print a DataFrame as a rich table"""
    if frame.empty:
        print_colored("SKIP", f"{title or 'table'}: no rows")
        return
    console.print(create_frame_table(frame, title, max_rows))


def print_check_rows(rows: pd.DataFrame) -> None:
    """Print PASS/FAIL rows of a check report"""
    for row in rows.itertuples(index=False):
        status = str(row.status)
        print_colored(status, f"{row.check}: {row.detail}")
