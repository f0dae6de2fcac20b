"""Geometric constants and radial grids for the axisymmetric Wilhelmy cell.

The plate is the unit disk, the container the disk of radius ``R``; liquid
fills the annulus between them.  All lengths are non-dimensional (plate
radius 1, Bond-number scaling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

INFINITE = math.inf

SUPPORTED_DIMENSIONS = (2, 3)


@dataclass(frozen=True)
class Params:
    """Physical and geometric parameters of one Wilhelmy configuration.

    ``R`` is either a finite ratio > 1 or :data:`INFINITE`, in which case the
    computational domain is truncated at ``R_trunc``.
    """

    d: int = 3
    g: float = 1.0
    cos_yp: float = 0.0
    cos_yc: float = 0.0
    mu_plus: float = 0.0
    mu_minus: float = 0.0
    R: float = 8.0
    R_trunc: float = 20.0

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.R)

    @property
    def outer_radius(self) -> float:
        return self.R_trunc if self.is_infinite else self.R

    @property
    def band(self) -> tuple:
        """Admissible plate cosines ``[cos_yp - mu_plus, cos_yp + mu_minus]``."""
        return (self.cos_yp - self.mu_plus, self.cos_yp + self.mu_minus)

    @property
    def h_max(self) -> float:
        return 50.0 / math.sqrt(self.g) if self.g > 0 else math.inf

    def replace(self, **changes) -> "Params":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return Params(**data)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if self.is_infinite:
            out["R"] = "inf"
        return out


def validate_params(p: Params) -> List[str]:
    """Return the list of violated parameter inequalities (empty means ok)."""
    problems = []
    if p.d not in SUPPORTED_DIMENSIONS:
        problems.append(f"d = {p.d} not in {SUPPORTED_DIMENSIONS}")
    if not p.g > 0:
        problems.append(f"g = {p.g} must be > 0")
    if not abs(p.cos_yc) < 1:
        problems.append(f"|cos_yc| = {abs(p.cos_yc):g} must be < 1")
    if p.mu_plus < 0:
        problems.append("mu_plus must be nonnegative")
    if p.mu_minus < 0:
        problems.append("mu_minus must be nonnegative")
    lo, hi = p.band
    if not -1 < lo < 1:
        problems.append(f"cos_yp - mu_plus = {lo:g} ∉ (-1,1)")
    if not -1 < hi < 1:
        problems.append(f"cos_yp + mu_minus = {hi:g} ∉ (-1,1)")
    if p.is_infinite:
        if not p.R_trunc > 1:
            problems.append(f"R_trunc = {p.R_trunc:g} must be > 1")
    elif not p.R > 1:
        problems.append(f"R = {p.R:g} must be > 1")
    return problems


def _check_d(d: int) -> None:
    if d not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"unsupported dimension d={d}; supported: {SUPPORTED_DIMENSIONS}")


def sphere_constant(d: int) -> float:
    """Measure of the unit sphere in R^{d-1}: 2π for d=3, 2 for d=2."""
    _check_d(d)
    n = d - 1
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def boundary_measure(r, d: int):
    """H^{d-2}(∂B_r) in R^{d-1}.  Accepts scalars or arrays."""
    _check_d(d)
    if np.any(np.asarray(r) <= 0):
        raise ValueError("r must be positive")
    c = sphere_constant(d)
    if np.ndim(r) == 0:
        return c * float(r) ** (d - 2)
    return c * np.power(np.asarray(r, dtype=float), d - 2)


def annulus_volume(R: float, d: int) -> float:
    """(d-1)-volume of B_R \\ B_1."""
    _check_d(d)
    if not R > 1:
        raise ValueError("annulus_volume needs R > 1")
    return sphere_constant(d) * (R ** (d - 1) - 1.0) / (d - 1)


def unit_ball_volume(n: int) -> float:
    """Volume of the n-dimensional unit ball (ω_n with ω_0 = 1)."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


MIN_NODES = 16


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes from 1 to the outer radius."""

    r: np.ndarray
    grading: str = "uniform"

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 1 or r.size < MIN_NODES:
            raise ValueError(f"grid needs at least {MIN_NODES} nodes, got {r.size}")
        if r[0] != 1.0:
            raise ValueError("grid must start exactly at r = 1")
        if not np.all(np.diff(r) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def outer(self) -> float:
        return float(self.r[-1])

    @property
    def dr(self) -> np.ndarray:
        return np.diff(self.r)

    @property
    def max_spacing(self) -> float:
        return float(self.dr.max())

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and np.array_equal(self.r, other.r)

    def __hash__(self):
        return hash(self.r.tobytes())


def make_grid(p: Params, N: int, grading: str = "uniform", outer: Optional[float] = None) -> RadialGrid:
    """Build an ``N``-node grid on ``[1, R]`` (or ``[1, R_trunc]``).

    ``boundary-refined`` uses the smooth map t ↦ t - 0.9 sin(2πt)/(2π), whose
    cells at both walls are ten times smaller than the mean spacing.
    """
    if N < MIN_NODES:
        raise ValueError(f"N = {N} < {MIN_NODES}")
    R = p.outer_radius if outer is None else outer
    t = np.linspace(0.0, 1.0, N)
    if grading == "uniform":
        x = t
    elif grading == "boundary-refined":
        x = t - 0.9 * np.sin(2 * np.pi * t) / (2 * np.pi)
    else:
        raise ValueError(f"unknown grading {grading!r}")
    r = 1.0 + (R - 1.0) * x
    r[0], r[-1] = 1.0, R
    return RadialGrid(r, grading)


def grid_with_spacing(outer: float, spacing: float) -> RadialGrid:
    """Uniform grid on ``[1, outer]`` with cell size as close to ``spacing`` as possible.

    Grids built with the same spacing share nodes near the plate, which keeps
    discretization errors aligned across container sizes.
    """
    cells = max(MIN_NODES - 1, int(round((outer - 1.0) / spacing)))
    r = 1.0 + np.arange(cells + 1) * ((outer - 1.0) / cells)
    r[-1] = outer
    return RadialGrid(r, "uniform")
