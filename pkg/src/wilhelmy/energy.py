"""Capillary energy of radial-graph profiles and its discrete derivatives.

Discretization used throughout the package:

* free surface: cell sums ``wbar_j * dr_j * phi(s_j)`` with ``s_j`` the cell
  slope and ``wbar_j`` the cell average of the boundary measure (exact for
  the linear weight of d = 3);
* bulk integrals (gravity, volume): trapezoid node weights ``q_i``.

The discrete first variation of this energy is a conservative flux
difference, so the Newton solver, the multiplier identities and the weak
pressure all share one consistent set of quadratures.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .geometry import Params, RadialGrid, boundary_measure


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    grid: RadialGrid
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != self.grid.r.shape:
            raise ProfileError(f"profile has {h.size} heights for {self.grid.n} grid nodes")
        if not np.all(np.isfinite(h)):
            raise ProfileError("profile heights must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    @property
    def ell(self) -> float:
        return float(self.h[0])

    @property
    def h_out(self) -> float:
        return float(self.h[-1])

    def shifted(self, c: float) -> "Profile":
        return Profile(self.grid, self.h + c)

    def check_ceiling(self, p: Params) -> None:
        m = float(np.max(np.abs(self.h)))
        if m > p.h_max:
            raise ProfileError(f"max|h| = {m:.6g} exceeds ceiling {p.h_max:.6g}")


@dataclass(frozen=True)
class EnergyBreakdown:
    free_surface: float
    plate_term: float
    container_term: float
    gravity: float
    total: float

    @classmethod
    def from_parts(cls, free_surface, plate_term, container_term, gravity):
        total = free_surface + plate_term + container_term + gravity
        return cls(float(free_surface), float(plate_term), float(container_term), float(gravity), float(total))

    def as_dict(self) -> dict:
        return dict(free_surface=self.free_surface, plate_term=self.plate_term,
                    container_term=self.container_term, gravity=self.gravity, total=self.total)


# --- quadrature weights ------------------------------------------------------

@dataclass(frozen=True)
class Weights:
    """Grid-dependent quadrature data (computed once per grid and dimension)."""

    dr: np.ndarray      # cell widths
    wbar: np.ndarray    # cell-averaged boundary measure
    q: np.ndarray       # trapezoid node weights of the measure
    sigma: float        # boundary measure at the plate
    w_out: float        # boundary measure at the outer radius

    @property
    def area(self) -> float:
        return float(self.q.sum())


@lru_cache(maxsize=64)
def weights(grid: RadialGrid, d: int) -> Weights:
    r = grid.r
    w = boundary_measure(r, d)
    dr = np.diff(r)
    wbar = 0.5 * (w[:-1] + w[1:])
    q = np.zeros_like(r)
    q[:-1] += 0.5 * dr * w[:-1]
    q[1:] += 0.5 * dr * w[1:]
    for a in (dr, wbar, q):
        a.setflags(write=False)
    return Weights(dr, wbar, q, float(w[0]), float(w[-1]))


def slopes(h: np.ndarray, dr: np.ndarray) -> np.ndarray:
    return np.diff(h) / dr


def flux(s: np.ndarray) -> np.ndarray:
    """psi = s / sqrt(1 + s^2), the vertical component of the unit conormal."""
    return s / np.sqrt(1.0 + s * s)


def _area_density(s: np.ndarray, relative: bool) -> np.ndarray:
    if relative:
        # sqrt(1+s^2) - 1 without cancellation
        return s * s / (np.sqrt(1.0 + s * s) + 1.0)
    return np.sqrt(1.0 + s * s)


# --- energy ------------------------------------------------------------------

def total_energy(prof: Profile, F: float, p: Params) -> EnergyBreakdown:
    W = weights(prof.grid, p.d)
    h = prof.h
    s = slopes(h, W.dr)
    relative = p.is_infinite
    free = float(np.sum(W.wbar * W.dr * _area_density(s, relative)))
    plate = -p.cos_yp * W.sigma * prof.ell
    container = 0.0 if relative else -p.cos_yc * W.w_out * (prof.h_out - F)
    u = h - F
    grav = float(np.sum(W.q * 0.5 * p.g * u * u))
    return EnergyBreakdown.from_parts(free, plate, container, grav)


def volume_functional(prof: Profile, F: float, p: Params) -> float:
    if p.is_infinite:
        raise ValueError("no volume constraint when R is infinite")
    W = weights(prof.grid, p.d)
    return float(np.dot(W.q, prof.h - F))


def dissipation(ell_prev: float, ell_new: float, p: Params) -> float:
    sigma = float(boundary_measure(1.0, p.d))
    step = ell_new - ell_prev
    return sigma * (p.mu_plus * max(step, 0.0) + p.mu_minus * max(-step, 0.0))


def _one_sided(h: np.ndarray, r: np.ndarray, at_start: bool) -> float:
    """Second-order one-sided derivative on a possibly nonuniform grid."""
    if at_start:
        x0, x1, x2 = r[0], r[1], r[2]
        y0, y1, y2 = h[0], h[1], h[2]
    else:
        x0, x1, x2 = r[-1], r[-2], r[-3]
        y0, y1, y2 = h[-1], h[-2], h[-3]
    a, b = x1 - x0, x2 - x0
    # Lagrange derivative at x0 through (x0,y0),(x1,y1),(x2,y2)
    # written in differences so constants are annihilated exactly
    return float(b / (a * (b - a)) * (y1 - y0) - a / (b * (b - a)) * (y2 - y0))


def boundary_slopes(prof: Profile) -> Tuple[float, float]:
    return _one_sided(prof.h, prof.r, True), _one_sided(prof.h, prof.r, False)


def contact_angles(prof: Profile, p: Params) -> Tuple[float, float]:
    """(cos θ_plate, cos θ_container) from one-sided second-order slopes."""
    s0, s1 = boundary_slopes(prof)
    return float(-flux(np.float64(s0))), float(flux(np.float64(s1)))


def mean_curvature(prof: Profile, d: int) -> np.ndarray:
    """Conservative discrete mean curvature (1/w)(w psi)' at interior nodes."""
    W = weights(prof.grid, d)
    psi = flux(slopes(prof.h, W.dr))
    fw = W.wbar * psi
    return (fw[1:] - fw[:-1]) / W.q[1:-1]


def mean_curvature_pointwise(prof: Profile, d: int) -> np.ndarray:
    """h''/(1+h'^2)^{3/2} + (d-2)/r h'/sqrt(1+h'^2) with centered nonuniform stencils."""
    r, h = prof.r, prof.h
    a = r[1:-1] - r[:-2]
    b = r[2:] - r[1:-1]
    dm = h[1:-1] - h[:-2]
    dp = h[2:] - h[1:-1]
    hp = b / (a * (a + b)) * dm + a / (b * (a + b)) * dp
    hpp = 2.0 * (dp / (b * (a + b)) - dm / (a * (a + b)))
    k = 1.0 + hp * hp
    return hpp / k ** 1.5 + (d - 2) / r[1:-1] * hp / np.sqrt(k)


def el_residual(prof: Profile, F: float, lam: float, p: Params, pointwise: bool = False) -> np.ndarray:
    """-H + g(h - F) - λ at interior nodes.

    The default uses the conservative flux form that the solver drives to
    zero; ``pointwise=True`` uses the non-divergence centered stencil.  Both
    are second-order consistent.
    """
    H = mean_curvature_pointwise(prof, p.d) if pointwise else mean_curvature(prof, p.d)
    return -H + p.g * (prof.h[1:-1] - F) - lam


def discrete_angles(prof: Profile, F: float, lam: float, p: Params) -> Tuple[float, float]:
    """Contact cosines from the discrete flux balance in the end cells.

    These are the boundary reactions of the discrete energy: at a KKT point
    with a natural boundary condition they equal the imposed cosine exactly,
    and they converge to the geometric angles under refinement.
    """
    W = weights(prof.grid, p.d)
    h = prof.h
    psi = flux(slopes(h, W.dr))
    lam_eff = 0.0 if p.is_infinite else lam
    c_plate = (-W.wbar[0] * psi[0] + W.q[0] * (p.g * (h[0] - F) - lam_eff)) / W.sigma
    c_cont = (W.wbar[-1] * psi[-1] + W.q[-1] * (p.g * (h[-1] - F) - lam_eff)) / W.w_out
    return float(c_plate), float(c_cont)


# --- derivatives of the discrete energy ---------------------------------------

def energy_gradient(h: np.ndarray, F: float, p: Params, W: Weights) -> np.ndarray:
    """Gradient of the discrete energy (without dissipation) w.r.t. nodal heights."""
    psi = flux(slopes(h, W.dr))
    fw = W.wbar * psi
    grad = p.g * W.q * (h - F)
    grad[:-1] -= fw
    grad[1:] += fw
    grad[0] -= p.cos_yp * W.sigma
    if not p.is_infinite:
        grad[-1] -= p.cos_yc * W.w_out
    return grad


def energy_hessian_bands(h: np.ndarray, p: Params, W: Weights) -> Tuple[np.ndarray, np.ndarray]:
    """(diagonal, off-diagonal) of the tridiagonal energy Hessian."""
    s = slopes(h, W.dr)
    k = W.wbar / W.dr / (1.0 + s * s) ** 1.5
    diag = p.g * W.q.copy()
    diag[:-1] += k
    diag[1:] += k
    return diag, -k


def energy_hessian_dense(h: np.ndarray, p: Params, W: Weights) -> np.ndarray:
    diag, off = energy_hessian_bands(h, p, W)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
