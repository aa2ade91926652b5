"""Report rows and deterministic CSV output."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


def fmt(value) -> str:
    """Stable text for a CSV cell; floats use repr so reruns are byte-identical."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        # float() drops numpy scalar types, whose repr is not a plain number
        return repr(float(value))
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return fmt(value.item())
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(header, rows))


@dataclass
class PropertyRow:
    """One holonomy property check."""

    property: str
    samples: int
    max_residual: float
    fitted_slope: float | None
    n_max: int
    verdict: str

    HEADER = ("property", "samples", "max_residual", "fitted_slope", "n_max", "verdict")

    def row(self) -> tuple:
        return (self.property, self.samples, self.max_residual, self.fitted_slope,
                self.n_max, self.verdict)


@dataclass
class CheckRow:
    """One conjugacy-engine check."""

    check: str
    samples: int
    max_residual: float
    slope_or_rate: float | None
    verdict: str

    HEADER = ("check", "samples", "max_residual", "slope_or_rate", "verdict")

    def row(self) -> tuple:
        return (self.check, self.samples, self.max_residual, self.slope_or_rate, self.verdict)


@dataclass
class Report:
    """An ordered collection of rows sharing one header."""

    rows: list = field(default_factory=list)

    def add(self, row) -> None:
        self.rows.append(row)

    def __getitem__(self, name: str):
        for r in self.rows:
            if getattr(r, "property", None) == name or getattr(r, "check", None) == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.verdict in ("pass", "skipped") for r in self.rows)

    def csv(self) -> str:
        if not self.rows:
            return ""
        return csv_text(self.rows[0].HEADER, [r.row() for r in self.rows])


def loglog_slope(scales, values, floor: float = 0.0):
    """Slope and r^2 of log(values) against log(scales), ignoring values <= floor."""
    s = np.asarray(scales, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > floor
    if keep.sum() < 2:
        return None, None
    X, Y = np.log(s[keep]), np.log(v[keep])
    slope, intercept = np.polyfit(X, Y, 1)
    pred = slope * X + intercept
    ss_res = float(np.sum((Y - pred) ** 2))
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2
