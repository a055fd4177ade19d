"""Convergence tables with fitted log-log slopes from experiment CSVs."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .runner import CSV_MAGIC

# abscissa and the columns whose decay is tabulated, per experiment
_LAYOUT = {
    "fas-scan": ("R", ("gap", "abs_minus_signed")),
    "sict": ("t", ("gap",)),
    "remainder": ("R", ("fas_distance",)),
    "window": ("R", ("log_flux",)),
    "bohm": ("R", ("multi_cross_frac",)),
}
# columns that already hold natural logs
_LOG_COLUMNS = {"log_flux"}


class ReportError(ValueError):
    pass


def loglog_slope(x, y, already_log=False):
    """Least-squares slope of log y against log x over the usable points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ly = y if already_log else np.log(np.where(y > 0, y, np.nan))
    ok = (x > 0) & np.isfinite(ly)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), ly[ok], 1)[0])


def read_table(path):
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ReportError(f"{path}: empty CSV")
    experiment = None
    if lines[0].startswith("#"):
        head = lines.pop(0)
        if CSV_MAGIC in head and "experiment=" in head:
            experiment = head.split("experiment=", 1)[1].strip()
    if not lines:
        raise ReportError(f"{path}: no header row")
    reader = csv.DictReader(lines)
    rows = list(reader)
    if not rows:
        raise ReportError(f"{path}: no data rows")
    return experiment, reader.fieldnames, rows


def table(path):
    experiment, fields, rows = read_table(path)
    if experiment not in _LAYOUT:
        raise ReportError(f"{path}: unknown or missing experiment tag {experiment!r}")
    x_col, y_cols = _LAYOUT[experiment]
    missing = [c for c in (x_col, *y_cols) if c not in fields]
    if missing:
        raise ReportError(f"{path}: missing columns {', '.join(missing)}")
    x = [float(r[x_col]) for r in rows]
    ys = {c: [float(r[c]) for r in rows] for c in y_cols}
    width = max(14, *(len(c) + 2 for c in (x_col, *y_cols)))
    out = [f"== {experiment}: {path} ==",
           "".join(s.rjust(width) for s in (x_col, *y_cols))]
    for i, xv in enumerate(x):
        out.append(f"{xv:>{width}g}" + "".join(f"{ys[c][i]:>{width}.4e}" for c in y_cols))
    slopes = [loglog_slope(x, ys[c], c in _LOG_COLUMNS) for c in y_cols]
    out.append("slope".rjust(width) + "".join(f"{s:>{width}.3f}" for s in slopes))
    return "\n".join(out), dict(zip(y_cols, slopes))


def report(paths):
    """Text report for one or more experiment CSVs."""
    if not paths:
        raise ReportError("no CSV files given")
    return "\n\n".join(table(p)[0] for p in paths) + "\n"
