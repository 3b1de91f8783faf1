"""RunRecord CSV and summary JSON emission, and CSV reading for fit/plot."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FitError
from ..scenario.analysis import bekker_fit
from ..scenario.sinkage import CSV_COLUMNS, RunRecord

TRUNCATION_MARKER = "# truncated"


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(record: RunRecord, path, error: str | None = None) -> Path:
    """Sinkage-phase rows in the fixed column order (SI units).

    When ``error`` is given the rows so far are kept and a final
    ``# truncated: <error>`` row marks the file as partial.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in record.rows():
            w.writerow([_fmt(v) for v in row])
        if error is not None:
            fh.write(f"{TRUNCATION_MARKER}: {' '.join(error.split())}\n")
    return path


def read_csv(path) -> dict:
    """Columns of a run CSV as float arrays; marker and comment rows are skipped."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}", field="csv")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigError(f"{path} does not have the run CSV header", field="csv")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {name: data[:, k] for k, name in enumerate(CSV_COLUMNS)}


def summary_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".summary.json")


def run_summary(record: RunRecord, area: float, error: str | None = None) -> dict:
    """Final sinkage, peak load, power-law fit, clipping count and wall-clock time."""
    try:
        fit = bekker_fit(*record.curve(), area).to_dict()
    except FitError as exc:
        fit = {"error": str(exc)}
    final = record.final_sinkage
    return {
        "final_sinkage_m": None if math.isnan(final) else final,
        "max_abs_sigma_N": record.max_abs_sigma,
        "bekker_fit": fit,
        "clipping_warnings": record.total_clipping,
        "wall_clock_s": record.metadata.get("wall_clock_s"),
        "reference_time_s": record.reference_time,
        "samples": sum(1 for _ in record.rows()),
        "truncated": error is not None,
        "error": error,
        "metadata": record.metadata,
    }


def write_json(doc: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
