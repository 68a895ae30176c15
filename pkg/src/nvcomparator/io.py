"""CSV ingestion and export of field records (columns ``time_s, field_T``)."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .series import TimeSeries, ValidationError

__all__ = ["DataError", "load_timeseries", "write_timeseries", "SPACING_TOLERANCE"]

SPACING_TOLERANCE = 1e-6
HEADER = ("time_s", "field_T")


class DataError(ValidationError):
    """Malformed input data; the message names the offending row."""


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_timeseries(path, format: str = "csv") -> TimeSeries:
    """Read a uniformly sampled two-column record.

    A header line is optional. Rows are numbered from 1 as they appear in the
    file (header included). Times must be strictly increasing with spacing
    uniform to ``SPACING_TOLERANCE`` relative; the sample rate is inferred
    from the mean spacing.
    """
    if format != "csv":
        raise DataError(f"unsupported format {format!r}")
    path = Path(path)
    times, values, rows = [], [], []
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                cells = [c.strip() for c in row]
                if lineno == 1 and not all(_is_number(c) for c in cells):
                    continue
                if len(cells) != 2:
                    raise DataError(f"{path}: row {lineno}: expected 2 columns, got {len(cells)}")
                try:
                    t, b = float(cells[0]), float(cells[1])
                except ValueError:
                    raise DataError(f"{path}: row {lineno}: non-numeric value {row!r}") from None
                if not (np.isfinite(t) and np.isfinite(b)):
                    raise DataError(f"{path}: row {lineno}: non-finite value {row!r}")
                times.append(t)
                values.append(b)
                rows.append(lineno)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if len(times) < 2:
        raise DataError(f"{path}: need at least two samples, found {len(times)}")
    t = np.asarray(times)
    dt = np.diff(t)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise DataError(f"{path}: row {rows[i]}: time {t[i]!r} does not increase")
    step = (t[-1] - t[0]) / (t.size - 1)
    jitter = np.abs(dt - step) / step
    bad = np.flatnonzero(jitter > SPACING_TOLERANCE)
    if bad.size:
        i = int(bad[0]) + 1
        raise DataError(
            f"{path}: row {rows[i]}: spacing {dt[i - 1]!r} s deviates from {step!r} s "
            f"by more than {SPACING_TOLERANCE:g} relative"
        )
    fs = float(f"{1.0 / step:.12g}")
    return TimeSeries(fs, np.asarray(values), start_time=float(t[0]))


def write_timeseries(series: TimeSeries, path) -> Path:
    """Write ``time_s, field_T`` with round-trip float formatting."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(HEADER)
            for t, b in zip(series.times, series.samples):
                w.writerow((repr(float(t)), repr(float(b))))
    except OSError as exc:
        raise OSError(f"cannot write time series to {path}: {exc}") from exc
    return path
