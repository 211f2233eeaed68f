"""Unit scaling and display rounding."""

from decimal import Decimal
from fractions import Fraction
from typing import Optional, Sequence, Union

Number = Union[int, float, Decimal, Fraction]

GIGA = 10**9
MEGA = 10**6


def to_fraction(value: Number) -> Fraction:
    """Exact rational for a number; floats go through their shortest repr."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def format_number(value: Optional[Number], places: int = 2, exact: bool = False) -> str:
    """Fixed-point display, or full precision with ``exact``."""
    if value is None:
        return ""
    if exact:
        if isinstance(value, (Fraction, int)) and Fraction(value).denominator == 1:
            return str(int(value))
        if isinstance(value, Decimal):
            return str(value)
        return repr(float(value))
    return f"{float(value):.{places}f}"


def gop(ops: Number) -> Fraction:
    return to_fraction(ops) / GIGA


def me(elements: Number) -> Fraction:
    return to_fraction(elements) / MEGA


def quote_cell(value: str) -> str:
    """CSV-quote a cell only when it needs it.

    Cells holding a delimiter or quote are quoted, and so is a leading ``#``,
    which the readers would otherwise take for a comment line.
    """
    if any(ch in value for ch in ',"') or value.startswith("#"):
        return '"' + value.replace('"', '""') + '"'
    return value


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned columns separated by two spaces."""
    widths = [len(cell) for cell in header]
    for row in rows:
        widths = [max(width, len(cell)) for width, cell in zip(widths, row)]
    lines = []
    for line in [list(header)] + [list(row) for row in rows]:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip())
    return "\n".join(lines)
