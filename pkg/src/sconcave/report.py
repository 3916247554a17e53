"""Deterministic report files: ``report.csv`` and ``summary.json``.

Floats are written with 17 significant digits so every double round-trips.
Nothing time- or host-dependent is written, so identical inputs give
byte-identical files.
"""

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

CSV_NAME = "report.csv"
SUMMARY_NAME = "summary.json"


def format_value(x):
    """CSV cell text: ``%.17g`` floats, ``true``/``false`` booleans, empty for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def columns_for(rows, lead=()):
    """``lead`` columns first, then every other key in first-seen order."""
    cols = [c for c in lead if any(c in r for r in rows)]
    for r in rows:
        for key in r:
            if key not in cols:
                cols.append(key)
    return cols


def csv_text(rows, lead=()):
    cols = columns_for(rows, lead)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([format_value(r.get(c)) for c in cols])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no inf/nan; keep them as strings
        return x if math.isfinite(x) else format_value(x)
    return x


def summary_text(summary):
    return json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n"


def write_report(out_dir, rows, summary, lead=()):
    """Write ``report.csv`` and ``summary.json`` under ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / CSV_NAME
    json_path = out / SUMMARY_NAME
    csv_path.write_text(csv_text(rows, lead), encoding="utf-8")
    json_path.write_text(summary_text(summary), encoding="utf-8")
    return csv_path, json_path


def read_report(path):
    """Rows of a written ``report.csv`` as dicts of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
