"""Convergence reports, log-log rate fits and CSV/JSON emission."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

CSV_HEADER = ["h", "value", "reference", "abs_error", "rel_error"]


def _fmt(x):
    return format(float(x), ".17g")


@dataclass
class Row:
    h: int
    value: float
    reference: float
    abs_error: float
    rel_error: float
    extras: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, h, value, reference, abs_error=None, **extras):
        """Row with ``abs_error = |value - reference|`` unless given; ``rel_error`` divides by
        ``|reference|`` (or equals ``abs_error`` when the reference is zero)."""
        err = abs(value - reference) if abs_error is None else abs(abs_error)
        rel = err / abs(reference) if reference != 0 else err
        return cls(int(h), float(value), float(reference), float(err), float(rel), extras)


@dataclass
class ConvergenceReport:
    experiment: str
    rows: list = field(default_factory=list)
    fitted_rate: float = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.h)

    def column(self, name):
        if name in CSV_HEADER:
            return np.array([getattr(r, name) for r in self.rows], dtype=float)
        return np.array([r.extras[name] for r in self.rows], dtype=float)


def fit_rate(report, abscissa=None, column="abs_error"):
    """Least-squares slope of ``log(error)`` against ``log(abscissa)``.

    ``abscissa`` defaults to ``report.metadata["abscissa"]`` (``"h"`` or an extras key such as ``"sigma"``).
    """
    abscissa = abscissa or report.metadata.get("abscissa", "h")
    xs = report.column(abscissa)
    ys = report.column(column)
    ok = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    if int(ok.sum()) < 3:
        raise DataError(f"need at least 3 rows with positive {column} and {abscissa}, got {int(ok.sum())}")
    slope, _ = np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)
    return float(slope)


def to_csv_text(report):
    from io import StringIO

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for r in report.rows:
        writer.writerow([str(r.h), _fmt(r.value), _fmt(r.reference), _fmt(r.abs_error), _fmt(r.rel_error)])
    return buf.getvalue()


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def to_json_text(report):
    rows = []
    for r in report.rows:
        row = {"h": r.h, "value": r.value, "reference": r.reference, "abs_error": r.abs_error,
               "rel_error": r.rel_error}
        if r.extras:
            row["extras"] = {k: r.extras[k] for k in sorted(r.extras)}
        rows.append(row)
    doc = {"experiment": report.experiment, "rows": rows, "fitted_rate": report.fitted_rate,
           "metadata": report.metadata}
    return json.dumps(_json_clean(doc), indent=2, sort_keys=False) + "\n"


def emit(report, fmt, out_dir):
    """Write ``<out_dir>/<experiment>.<fmt>`` and return its path."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"{report.experiment}.{fmt}")
        text = to_csv_text(report) if fmt == "csv" else to_json_text(report)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir!r}: {exc}") from exc
    return path


def read_csv(path):
    """Parse a report CSV back into :class:`Row` objects."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        return [Row(int(h), float(v), float(ref), float(a), float(rl)) for h, v, ref, a, rl in reader]
