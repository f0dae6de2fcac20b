"""Run configuration: a small ``key = value`` format with ``[section]`` headers.

Keys before the first header belong to ``[params]``.  Every key must be known,
may appear only once per section, and values are type-checked on parse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .evolution import ForcingSchedule
from .geometry import INFINITE, Params, validate_params
from .solver import Tolerances


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _real(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinite", "+inf"):
        return INFINITE
    x = float(t)
    if math.isnan(x):
        raise ValueError("nan is not allowed")
    return x


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip().strip('"').strip("'")


def _real_list(text: str) -> Tuple[float, ...]:
    return tuple(_real(v) for v in text.split(",") if v.strip())


def _knots(text: str) -> Tuple[Tuple[float, float], ...]:
    """``t:F`` pairs separated by commas, e.g. ``0:0, 1:1, 2:0``."""
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        t, sep, f = item.partition(":")
        if not sep:
            raise ValueError(f"knot {item.strip()!r} is not of the form t:F")
        out.append((_real(t), _real(f)))
    return tuple(out)


SCHEMA = {
    "params": {"d": _int, "g": _real, "cos_yp": _real, "cos_yc": _real, "mu_plus": _real,
               "mu_minus": _real, "R": _real, "R_trunc": _real},
    "grid": {"N": _int, "grading": _str},
    "schedule": {"preset": _str, "knots": _knots, "amplitude": _real, "base": _real,
                 "cycles": _int, "delta": _real},
    "solver": {"kkt": _real, "vol": _real, "angle": _real, "max_iters": _int},
    "outputs": {"dir": _str, "artifacts": lambda s: tuple(_str(v) for v in s.split(",") if v.strip())},
    "solve": {"F": _real, "mode": _str, "ell": _real},
    "sweep": {"R_list": _real_list, "spacing": _real, "R_trunc": _real, "workers": _int},
    "barriers": {"a": _real, "A": _real, "b": _real, "B": _real, "safety": _real},
}

ARTIFACTS = ("csv", "json", "png")
GRADINGS = ("uniform", "boundary-refined")
MODES = ("young", "pinned", "band")


@dataclass(frozen=True)
class RunConfig:
    params: Params
    N: int = 256
    grading: str = "uniform"
    schedule: ForcingSchedule = field(default_factory=lambda: ForcingSchedule.preset("cycle"))
    delta: float = 0.01
    tol: Tolerances = field(default_factory=Tolerances)
    out_dir: str = "out"
    artifacts: Tuple[str, ...] = ARTIFACTS
    solve_F: Optional[float] = None
    solve_mode: str = "young"
    solve_ell: Optional[float] = None
    R_list: Tuple[float, ...] = (8.0, 16.0, 32.0, 64.0)
    sweep_spacing: float = 0.05
    sweep_R_trunc: float = 30.0
    workers: int = 1
    barrier: Optional[Tuple[float, float, float, float]] = None
    barrier_safety: float = 1.1
    raw: Dict[str, Dict[str, object]] = field(default_factory=dict, compare=False)

    def wants(self, kind: str) -> bool:
        return kind in self.artifacts

    def as_dict(self) -> dict:
        return {"params": self.params.as_dict(), "grid": {"N": self.N, "grading": self.grading},
                "schedule": {"knots": [list(k) for k in self.schedule.knots], "delta": self.delta},
                "solver": {"kkt": self.tol.kkt, "vol": self.tol.vol, "angle": self.tol.angle,
                           "max_iters": self.tol.max_iters},
                "outputs": {"dir": self.out_dir, "artifacts": list(self.artifacts)}}


def _scan(text: str) -> Dict[str, Dict[str, Tuple[str, int]]]:
    sections: Dict[str, Dict[str, Tuple[str, int]]] = {}
    current = "params"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", lineno)
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno)
        sec = sections.setdefault(current, {})
        if key in sec:
            raise ConfigError(f"duplicate key {key!r} in [{current}] on lines {sec[key][1]} and {lineno}",
                              lineno)
        sec[key] = (value.strip(), lineno)
    return sections


def parse_config(text: str) -> RunConfig:
    raw = _scan(text)
    vals: Dict[str, Dict[str, object]] = {}
    for sec, items in raw.items():
        for key, (value, lineno) in items.items():
            try:
                vals.setdefault(sec, {})[key] = SCHEMA[sec][key](value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None

    def get(sec, key, default=None):
        return vals.get(sec, {}).get(key, default)

    def line_of(sec, key):
        return raw.get(sec, {}).get(key, (None, None))[1]

    p = Params(**vals.get("params", {}))
    problems = validate_params(p)
    if problems:
        raise ConfigError("; ".join(problems))

    N = get("grid", "N", 256)
    grading = get("grid", "grading", "uniform")
    if grading not in GRADINGS:
        raise ConfigError(f"grading must be one of {GRADINGS}", line_of("grid", "grading"))
    if N < 16:
        raise ConfigError("N must be at least 16", line_of("grid", "N"))

    try:
        if "knots" in vals.get("schedule", {}):
            if "preset" in vals["schedule"]:
                raise ConfigError("give either knots or preset, not both", line_of("schedule", "knots"))
            schedule = ForcingSchedule(get("schedule", "knots"))
        else:
            schedule = ForcingSchedule.preset(get("schedule", "preset", "cycle"),
                                              amplitude=get("schedule", "amplitude", 1.0),
                                              base=get("schedule", "base", 0.0),
                                              cycles=get("schedule", "cycles", 1))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), line_of("schedule", "knots") or line_of("schedule", "preset")) from None
    delta = get("schedule", "delta", schedule.T / 200 if schedule.T > 0 else 1.0)
    if not delta > 0:
        raise ConfigError("delta must be positive", line_of("schedule", "delta"))

    base_tol = Tolerances()
    tol = Tolerances(kkt=get("solver", "kkt", base_tol.kkt), vol=get("solver", "vol", base_tol.vol),
                     angle=get("solver", "angle", base_tol.angle),
                     max_iters=get("solver", "max_iters", base_tol.max_iters))

    artifacts = get("outputs", "artifacts", ARTIFACTS)
    for a in artifacts:
        if a not in ARTIFACTS:
            raise ConfigError(f"unknown artifact {a!r}; choose from {ARTIFACTS}", line_of("outputs", "artifacts"))

    mode = get("solve", "mode", "young")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}", line_of("solve", "mode"))
    if mode != "young" and get("solve", "ell") is None:
        raise ConfigError(f"mode {mode!r} needs ell", line_of("solve", "mode"))

    bar = vals.get("barriers", {})
    given = [k for k in ("a", "A", "b", "B") if k in bar]
    if given and len(given) < 4:
        raise ConfigError("barriers need all of a, A, b, B (or none for the recipe)",
                          line_of("barriers", given[0]))
    barrier = tuple(bar[k] for k in ("a", "A", "b", "B")) if given else None

    R_list = get("sweep", "R_list", (8.0, 16.0, 32.0, 64.0))
    if not R_list or any(not (1 < R < math.inf) for R in R_list):
        raise ConfigError("R_list needs finite radii > 1", line_of("sweep", "R_list"))

    return RunConfig(params=p, N=N, grading=grading, schedule=schedule, delta=float(delta), tol=tol,
                     out_dir=get("outputs", "dir", "out"), artifacts=tuple(artifacts),
                     solve_F=get("solve", "F"), solve_mode=mode, solve_ell=get("solve", "ell"),
                     R_list=tuple(R_list), sweep_spacing=get("sweep", "spacing", 0.05),
                     sweep_R_trunc=get("sweep", "R_trunc", 30.0), workers=get("sweep", "workers", 1),
                     barrier=barrier, barrier_safety=get("barriers", "safety", 1.1), raw=vals)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())
