"""Bit-stable CSV/JSON export.

Floats are written with ``repr`` (shortest round-trip decimal), so reading a
file back reproduces every value exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .energy import Profile
from .evolution import TRACE_COLUMNS, EvolutionTrace
from .geometry import RadialGrid


def fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def write_profile_csv(path, prof: Profile) -> Path:
    return write_rows(path, ("r", "h"), zip(prof.r, prof.h))


def read_profile_csv(path) -> Profile:
    header, rows = read_rows(path)
    if header != ["r", "h"]:
        raise ValueError(f"unexpected profile header {header}")
    r = np.array([float(a) for a, _ in rows])
    h = np.array([float(b) for _, b in rows])
    return Profile(RadialGrid(r), h)


def write_trace_csv(path, trace: EvolutionTrace) -> Path:
    return write_rows(path, TRACE_COLUMNS, trace.rows())


def read_trace_csv(path) -> dict:
    header, rows = read_rows(path)
    if tuple(header) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    cols = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in rows]
        cols[name] = np.array(vals) if name == "regime" else np.array([float(v) for v in vals])
    return cols


def jsonable(obj):
    """Convert dataclasses, numpy values and non-finite floats into plain JSON."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (str, np.str_)):
        return str(obj)
    if obj is None:
        return None
    if isinstance(obj, RadialGrid):
        return {"n": obj.n, "grading": obj.grading, "outer": obj.outer}
    if isinstance(obj, Profile):
        return {"r": jsonable(obj.r), "h": jsonable(obj.h)}
    return repr(obj)


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(jsonable(data), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    return path


def report(check: str, params, inputs: dict, outputs: dict, margins: dict, passed: bool) -> dict:
    """Standard report document."""
    p = params.as_dict() if hasattr(params, "as_dict") else params
    return {"check": check, "params": p, "inputs": inputs, "outputs": outputs,
            "margins": margins, "pass": bool(passed)}
