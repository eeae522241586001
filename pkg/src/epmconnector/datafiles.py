"""
Readers for the CSV fixtures and measurement files, and locations of the shipped data.

Every reader reports malformed input as ``DataFormatError`` carrying the 1-based line number.
"""

from __future__ import annotations

import csv
import io
import math
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from .fluidics import FlowMeasurement, TransferMode
from .force import ForceMeasurement

T = TypeVar("T")


class DataFormatError(ValueError):
    def __init__(self, path: str | Path, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def data_path(name: str) -> Path:
    """Path of a fixture shipped inside the package."""
    return Path(str(resources.files("epmconnector") / "data" / name))


def _number(text: str, path: str | Path, line: int, column: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise DataFormatError(path, line, f"column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise DataFormatError(path, line, f"column {column!r}: not finite: {text!r}")
    return v


def read_rows(
    path: str | Path, columns: Sequence[str], convert: Callable[[dict[str, str], int], T]
) -> list[T]:
    """
    Parse a headed CSV. ``columns`` must all be present in the header; extra columns are ignored. Blank lines
    are skipped. ``convert`` gets the row and its line number and may raise ValueError, which is rewrapped.
    """
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header: list[str] | None = None
    out: list[T] = []
    for cells in reader:
        line = reader.line_num
        if not any(c.strip() for c in cells):
            continue
        cells = [c.strip() for c in cells]
        if header is None:
            missing = [c for c in columns if c not in cells]
            if missing:
                raise DataFormatError(path, line, f"header lacks column(s) {', '.join(missing)}")
            header = cells
            continue
        if len(cells) != len(header):
            raise DataFormatError(path, line, f"expected {len(header)} fields, got {len(cells)}")
        row = dict(zip(header, cells))
        try:
            out.append(convert(row, line))
        except DataFormatError:
            raise
        except ValueError as exc:
            raise DataFormatError(path, line, str(exc)) from None
    if header is None:
        raise DataFormatError(path, 1, "missing header row")
    return out


def read_force_csv(path: str | Path) -> list[ForceMeasurement]:
    """``gap_mm,force_N`` rows; returns SI measurements."""

    def conv(row: dict[str, str], line: int) -> ForceMeasurement:
        gap = _number(row["gap_mm"], path, line, "gap_mm")
        return ForceMeasurement(gap * 1e-3, _number(row["force_N"], path, line, "force_N"))

    return read_rows(path, ("gap_mm", "force_N"), conv)


def read_fluid_csv(path: str | Path) -> list[FlowMeasurement]:
    """``mode,inlet_ml_min,outlet_ml_min`` rows."""

    def conv(row: dict[str, str], line: int) -> FlowMeasurement:
        return FlowMeasurement(
            TransferMode.parse(row["mode"]),
            _number(row["inlet_ml_min"], path, line, "inlet_ml_min"),
            _number(row["outlet_ml_min"], path, line, "outlet_ml_min"),
        )

    return read_rows(path, ("mode", "inlet_ml_min", "outlet_ml_min"), conv)


def read_dock_targets(path: str | Path) -> dict[float, int]:
    """``tilt_deg,success_count`` rows."""

    def conv(row: dict[str, str], line: int) -> tuple[float, int]:
        count = _number(row["success_count"], path, line, "success_count")
        if count != int(count) or count < 0:
            raise ValueError(f"success_count must be a nonnegative integer, got {row['success_count']!r}")
        return _number(row["tilt_deg"], path, line, "tilt_deg"), int(count)

    rows = read_rows(path, ("tilt_deg", "success_count"), conv)
    if not rows:
        raise DataFormatError(path, 2, "no targets")
    return dict(rows)


def read_quantities(path: str | Path) -> dict[str, float]:
    """``quantity,value`` rows."""

    def conv(row: dict[str, str], line: int) -> tuple[str, float]:
        return row["quantity"], _number(row["value"], path, line, "value")

    return dict(read_rows(path, ("quantity", "value"), conv))
