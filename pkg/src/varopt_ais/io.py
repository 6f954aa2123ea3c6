"""Readers and writers for models, schedules, g tables and AIS results.

Floats are written with 17 significant digits so every file round-trips
exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .ais import AisResult, Schedule
from .model import RbmParams
from .schedule import GTable

_FMT = "{:.17g}"


def _fmt(x) -> str:
    return _FMT.format(float(x))


def save_model(params: RbmParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=1) + "\n")


def load_model(path) -> RbmParams:
    return RbmParams.from_dict(json.loads(Path(path).read_text()))


def save_schedule(schedule: Schedule, path) -> None:
    lines = ["beta"] + [_fmt(b) for b in schedule.betas]
    Path(path).write_text("\n".join(lines) + "\n")


def load_schedule(path) -> Schedule:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["beta"]:
        raise ValueError(f"{path}: expected a single 'beta' column")
    return Schedule(np.array([float(r[0]) for r in rows[1:] if r]))


GTABLE_COLUMNS = ("beta", "g_raw", "g_smoothed", "dlog_g")


def save_gtable(table: GTable, path) -> None:
    cols = [table.grid, table.g_raw,
            table.g if table.g_smoothed is None else table.g_smoothed,
            np.zeros_like(table.grid) if table.dlog_g is None else table.dlog_g]
    lines = [",".join(GTABLE_COLUMNS)]
    lines += [",".join(_fmt(c[i]) for c in cols) for i in range(table.grid.size)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_gtable(path) -> GTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader if row])
    if tuple(header) != GTABLE_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(GTABLE_COLUMNS)}")
    return GTable(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def save_result(result: AisResult, path, log_weights_csv=None) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=1) + "\n")
    if log_weights_csv is not None:
        lines = ["log_w"] + [_fmt(x) for x in result.log_weights]
        Path(log_weights_csv).write_text("\n".join(lines) + "\n")


def load_result_dict(path) -> dict:
    return json.loads(Path(path).read_text())


def load_log_weights(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["log_w"]:
        raise ValueError(f"{path}: expected a single 'log_w' column")
    return np.array([float(r[0]) for r in rows[1:] if r])
