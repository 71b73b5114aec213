from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..core.gestures import GestureClass
from .metrics import GROUPS, ConfusionResult, MetricsReport


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        return None if not np.isfinite(o) else float(o)
    return o


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_class_table(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class", "tp", "fp", "fn", "f1"])
        for g in GROUPS:
            c = report.per_class[g]
            w.writerow([g, c.tp, c.fp, c.fn, f"{c.f1:.6f}"])


def write_confusion(path, cm: ConfusionResult) -> None:
    names = [g.name for g in GestureClass]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["true\\pred"] + names)
        for name, row in zip(names, cm.matrix):
            w.writerow([name] + [int(v) for v in row])


def write_plot_data(path, report: MetricsReport) -> None:
    """Per-class F1 bars as ``class,f1`` rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class", "f1"])
        for g in GROUPS:
            w.writerow([g, f"{report.per_class[g].f1:.6f}"])
