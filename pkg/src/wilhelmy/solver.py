"""Incremental minimization steps, equilibria, and an independent shooting oracle.

One step of the scheme minimizes the discrete energy plus the dissipation from
the previous contact height, subject to the linear volume constraint.  The
dissipation is piecewise linear in the contact height, so the step is solved
as up to two smooth problems (pinned first, then sliding at a band edge) with
the pinned reaction deciding which.  Each smooth problem is a strictly convex
equality-constrained minimization solved by damped Newton on the bordered
tridiagonal KKT system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solveh_banded
from scipy.optimize import brentq

from .energy import (Profile, ProfileError, discrete_angles, dissipation, energy_gradient,
                     energy_hessian_bands, total_energy, weights)
from .geometry import Params, RadialGrid, boundary_measure, make_grid, validate_params

PINNED, ADVANCING, RECEDING = "pinned", "advancing", "receding"


class SolverError(RuntimeError):
    pass


class CeilingError(SolverError):
    pass


class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    kkt: float = 1e-8        # relative: residual <= kkt * (1 + |λ|)
    vol: float = 1e-10       # relative to the annulus volume
    angle: float = 1e-6
    max_iters: int = 60
    backtrack: float = 0.5
    max_backtracks: int = 30

    def kkt_tol(self, lam: float) -> float:
        return self.kkt * (1.0 + abs(lam))


@dataclass(frozen=True)
class StableState:
    profile: Profile
    F: float
    lam: float
    cos_plate: float
    cos_container: float
    regime: str = PINNED
    newton_iters: int = 0
    kkt_residual: float = 0.0

    @property
    def ell(self) -> float:
        return self.profile.ell

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid

    @property
    def h(self) -> np.ndarray:
        return self.profile.h


@dataclass(frozen=True)
class StepProblem:
    prev: StableState
    F_new: float
    params: Params
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not math.isfinite(self.F_new):
            raise ValueError("F_new must be finite")


# --- plate boundary modes for solve_equilibrium --------------------------------

@dataclass(frozen=True)
class Pinned:
    ell: float


@dataclass(frozen=True)
class Band:
    ell_prev: float


YOUNG = "young-angles"
Mode = Union[str, Pinned, Band]


# --- Newton core -----------------------------------------------------------------

@dataclass
class _Result:
    h: np.ndarray
    lam: float
    iters: int
    residual: float


def _solve_kkt(grid: RadialGrid, F: float, p: Params, h_init: np.ndarray, lam_init: float,
               ell_fixed: Optional[float], cos_eff: float, constrained: bool,
               tol: Tolerances, callback: Optional[Callable] = None) -> _Result:
    """Damped Newton for one smooth subproblem.

    ``ell_fixed`` pins the plate node; otherwise the plate carries the linear
    term ``-cos_eff * sigma * h_0``.  For infinite R the outer node is held at
    F and there is no multiplier.
    """
    W = weights(grid, p.d)
    n = grid.n
    h = np.array(h_init, dtype=float)
    lo = 0
    if ell_fixed is not None:
        h[0] = ell_fixed
        lo = 1
    hi = n
    if p.is_infinite:
        h[-1] = F
        hi = n - 1
        constrained = False
    free = slice(lo, hi)
    q = W.q
    qf = q[free]
    area = W.area
    lam = float(lam_init) if constrained else 0.0
    plate_shift = (p.cos_yp - cos_eff) * W.sigma

    def residuals(hh, ll):
        grad = energy_gradient(hh, F, p, W)
        grad[0] += plate_shift
        r = grad[free] - ll * qf if constrained else grad[free]
        c = float(np.dot(q, hh - F)) if constrained else 0.0
        return r, c

    def merit(r, c, ll):
        m = float(np.max(np.abs(r) / qf)) / (1.0 + abs(ll))
        return max(m, abs(c) / area / tol.vol * tol.kkt)

    def converged(r, c, ll):
        return (float(np.max(np.abs(r) / qf)) <= tol.kkt_tol(ll)
                and abs(c) <= tol.vol * area)

    r, c = residuals(h, lam)
    it = 0
    while not converged(r, c, lam):
        if it >= tol.max_iters:
            raise SolverError(f"Newton did not converge in {tol.max_iters} iterations "
                              f"(last residual {merit(r, c, lam):.3e})")
        it += 1
        diag, off = energy_hessian_bands(h, p, W)
        if callback is not None:
            callback(h.copy(), lam, free)
        ab = np.zeros((2, hi - lo))
        ab[0] = diag[free]
        ab[1, :-1] = off[lo:hi - 1]
        if constrained:
            sol = solveh_banded(ab, np.column_stack([-r, qf]), lower=True)
            a, b = sol[:, 0], sol[:, 1]
            dlam = (-c - np.dot(qf, a)) / np.dot(qf, b)
            dh = a + b * dlam
        else:
            dh = solveh_banded(ab, -r, lower=True)
            dlam = 0.0
        m0 = merit(r, c, lam)
        alpha = 1.0
        for _ in range(tol.max_backtracks + 1):
            h_try = h.copy()
            h_try[free] += alpha * dh
            lam_try = lam + alpha * dlam
            r_try, c_try = residuals(h_try, lam_try)
            m_try = merit(r_try, c_try, lam_try)
            if np.isfinite(m_try) and (m_try < (1.0 - 1e-4 * alpha) * m0 or m_try <= 10 * tol.kkt):
                break
            alpha *= tol.backtrack
        else:
            raise SolverError(f"line search failed after {tol.max_backtracks} backtracks "
                              f"(residual {m0:.3e})")
        h, lam, r, c = h_try, lam_try, r_try, c_try
        if float(np.max(np.abs(h))) > p.h_max:
            raise CeilingError(f"iterate exceeds height ceiling {p.h_max:.6g}")
    return _Result(h, lam, it, float(np.max(np.abs(r) / qf)) if r.size else 0.0)


def _make_state(grid, F, p, res: _Result, regime: str) -> StableState:
    prof = Profile(grid, res.h)
    try:
        prof.check_ceiling(p)
    except ProfileError as exc:
        raise CeilingError(str(exc)) from None
    cp, cc = discrete_angles(prof, F, res.lam, p)
    lam = 0.0 if p.is_infinite else res.lam
    return StableState(prof, float(F), float(lam), cp, cc, regime, res.iters, res.residual)


def _trichotomy(grid, F, p, ell_prev, h_init, lam_init, tol, callback=None) -> StableState:
    pinned = _solve_kkt(grid, F, p, h_init, lam_init, ell_prev, p.cos_yp, True, tol, callback)
    st = _make_state(grid, F, p, pinned, PINNED)
    lo, hi = p.band
    if st.cos_plate > hi + tol.angle:
        regime, cos_eff = RECEDING, hi
    elif st.cos_plate < lo - tol.angle:
        regime, cos_eff = ADVANCING, lo
    else:
        return st
    try:
        slide = _solve_kkt(grid, F, p, pinned.h, pinned.lam, None, cos_eff, True, tol, callback)
    except SolverError:
        # a pinned profile far outside the band can be too steep for a warm start
        slide = _solve_kkt(grid, F, p, np.full(grid.n, float(F)), 0.0, None, cos_eff, True, tol, callback)
    slide.iters += pinned.iters
    out = _make_state(grid, F, p, slide, regime)
    moved = out.ell - ell_prev
    if (regime == RECEDING and moved > 0) or (regime == ADVANCING and moved < 0):
        raise SolverError(f"{regime} solve moved the contact line the wrong way ({moved:.3e})")
    return out


def minimize_step(sp: StepProblem, callback: Optional[Callable] = None) -> StableState:
    p = sp.params
    prev = sp.prev
    bad = validate_params(p)
    if bad:
        raise ValueError("; ".join(bad))
    dF = sp.F_new - prev.F
    h_init = prev.h + dF
    return _trichotomy(prev.grid, sp.F_new, p, prev.ell, h_init, prev.lam, sp.tol, callback)


def default_grid(p: Params, N: int = 256, grading: str = "boundary-refined") -> RadialGrid:
    return make_grid(p, N, grading)


def solve_equilibrium(F: float, p: Params, mode: Mode = YOUNG, grid: Optional[RadialGrid] = None,
                      constrained: bool = True, tol: Tolerances = Tolerances(),
                      h_init: Optional[np.ndarray] = None, callback: Optional[Callable] = None) -> StableState:
    """Equilibrium at forcing ``F``.

    ``constrained=False`` drops the volume constraint (λ = 0), which gives the
    unconstrained minimizer used for the reference configuration.
    """
    bad = validate_params(p)
    if bad:
        raise ValueError("; ".join(bad))
    grid = grid if grid is not None else default_grid(p)
    guess = np.full(grid.n, float(F)) if h_init is None else np.asarray(h_init, dtype=float)
    if mode == YOUNG:
        res = _solve_kkt(grid, F, p, guess, 0.0, None, p.cos_yp, constrained, tol, callback)
        return _make_state(grid, F, p, res, PINNED)
    if isinstance(mode, Pinned):
        res = _solve_kkt(grid, F, p, guess, 0.0, mode.ell, p.cos_yp, constrained, tol, callback)
        return _make_state(grid, F, p, res, PINNED)
    if isinstance(mode, Band):
        if not constrained:
            raise ValueError("band mode always carries the volume constraint")
        return _trichotomy(grid, F, p, mode.ell_prev, guess, 0.0, tol, callback)
    raise ValueError(f"unknown mode {mode!r}")


def flat_state(F: float, p: Params, grid: RadialGrid) -> StableState:
    """Flat profile at height F with its discrete reaction angles (exact when both cosines vanish)."""
    prof = Profile(grid, np.full(grid.n, float(F)))
    cp, cc = discrete_angles(prof, F, 0.0, p)
    return StableState(prof, float(F), 0.0, cp, cc, PINNED, 0, 0.0)


def multiplier_estimate(prof: Profile, F: float, p: Params) -> float:
    """Least-squares constant in -H + g(h - F) = λ over interior nodes."""
    from .energy import mean_curvature
    W = weights(prof.grid, p.d)
    resid = -mean_curvature(prof, p.d) + p.g * (prof.h[1:-1] - F)
    qi = W.q[1:-1]
    return float(np.dot(qi, resid) / qi.sum())


def check_state(s: StableState, p: Params, tol: Tolerances = Tolerances()) -> List[str]:
    """List violated StableState invariants (empty when all hold)."""
    out = []
    lo, hi = p.band
    if not lo - tol.angle <= s.cos_plate <= hi + tol.angle:
        out.append(f"cos_plate {s.cos_plate:.8f} outside band [{lo}, {hi}]")
    if not p.is_infinite and abs(s.cos_container - p.cos_yc) > tol.angle:
        out.append(f"cos_container {s.cos_container:.8f} != cos_yc {p.cos_yc}")
    C0 = 10.0 * (1.0 + 1.0 / math.sqrt(p.g))
    if abs(s.lam) > C0 * p.g:
        out.append(f"|lambda| = {abs(s.lam):.4g} > C0 g = {C0 * p.g:.4g}")
    if s.kkt_residual > tol.kkt_tol(s.lam):
        out.append(f"kkt residual {s.kkt_residual:.3e} above tolerance")
    if s.regime == RECEDING and abs(s.cos_plate - hi) > tol.angle:
        out.append("receding state not on the upper band edge")
    if s.regime == ADVANCING and abs(s.cos_plate - lo) > tol.angle:
        out.append("advancing state not on the lower band edge")
    return out


# --- shooting oracle ----------------------------------------------------------------

@dataclass(frozen=True)
class ShootResult:
    profile: Profile
    lam: float
    ell: float
    slope: float          # h'(1)
    energy: float         # continuum energy from the integrated densities
    volume: float


@dataclass(frozen=True)
class HeightBC:
    ell: float


@dataclass(frozen=True)
class AngleBC:
    cos: float


_BLOWUP = 0.999999


def _rhs(p: Params, F: float, lam: float):
    d, g = p.d, p.g
    sig = float(boundary_measure(1.0, d))
    relative = p.is_infinite

    def f(r, y):
        h, psi = y[0], y[1]
        root = math.sqrt(max(1.0 - psi * psi, 1e-300))
        w = sig * r ** (d - 2)
        H = g * (h - F) - lam
        dpsi = H - (d - 2) / r * psi
        area = w * (1.0 / root - 1.0) if relative else w / root
        return [psi / root, dpsi, w * (h - F), area, w * 0.5 * g * (h - F) ** 2]

    return f


def _integrate(p, F, lam, ell, psi0, R, t_eval=None, rtol=1e-11, atol=1e-13):
    def blow(r, y):
        return _BLOWUP - abs(y[1])
    blow.terminal = True
    sol = solve_ivp(_rhs(p, F, lam), (1.0, R), [ell, psi0, 0.0, 0.0, 0.0], method="RK45",
                    rtol=rtol, atol=atol, events=blow, t_eval=t_eval)
    return sol


def _terminal_value(sol, target_kind: str, target: float, F: float) -> float:
    """Signed miss at the outer radius; blowups map to ±2 with the growth sign."""
    y = sol.y[:, -1]
    if sol.status == 1:  # terminated by blowup event
        return 2.0 * math.copysign(1.0, y[1])
    if target_kind == "angle":
        return y[1] - target
    return y[0] - F - target


def _bracket(fun, center: float, span0: float, limit: float, name: str):
    f0 = fun(center)
    if f0 == 0.0:
        return center, center
    span = span0
    while span <= limit:
        for x in (center - span, center + span):
            fx = fun(x)
            if fx == 0.0 or math.copysign(1.0, fx) != math.copysign(1.0, f0):
                return (min(center, x), max(center, x))
        span *= 2.0
    raise ShootingError(f"no sign change for {name} in [{center - limit:.6g}, {center + limit:.6g}]")


def shoot_oracle(F: float, lam: float, plate_bc: Union[HeightBC, AngleBC], p: Params,
                 grid: Optional[RadialGrid] = None, solve_volume: bool = False,
                 xtol: float = 1e-14) -> ShootResult:
    """Integrate the radial Euler-Lagrange ODE from the plate and shoot on the free datum.

    The unknown (contact height for an angle condition, plate slope for a
    height condition) is found by bracketing plus Brent iteration so that the
    container cosine equals cos_yc (or, for infinite R, h(R_trunc) = F).
    With ``solve_volume`` an outer secant loop adjusts λ for zero volume.
    """
    R = p.outer_radius
    target_kind, target = ("height", 0.0) if p.is_infinite else ("angle", p.cos_yc)

    def inner(lam_):
        if isinstance(plate_bc, AngleBC):
            psi0 = -plate_bc.cos

            def miss(ell):
                return _terminal_value(_integrate(p, F, lam_, ell, psi0, R), target_kind, target, F)
            a, b = _bracket(miss, F + lam_ / p.g, 0.25, 4 * p.h_max, "contact height")
            ell = a if a == b else brentq(miss, a, b, xtol=xtol, rtol=1e-15, maxiter=200)
            return ell, psi0
        ell = plate_bc.ell

        def miss_psi(psi0):
            return _terminal_value(_integrate(p, F, lam_, ell, psi0, R), target_kind, target, F)
        lo, hi = -_BLOWUP, _BLOWUP
        flo, fhi = miss_psi(lo), miss_psi(hi)
        if flo * fhi > 0:
            raise ShootingError(f"no sign change for plate slope in psi ∈ [{lo}, {hi}]")
        psi0 = brentq(miss_psi, lo, hi, xtol=xtol, rtol=1e-15, maxiter=200)
        return ell, psi0

    def volume(lam_):
        ell, psi0 = inner(lam_)
        sol = _integrate(p, F, lam_, ell, psi0, R)
        return sol.y[2, -1]

    if solve_volume and not p.is_infinite:
        l0, l1 = lam, lam + 1e-3
        v0, v1 = volume(l0), volume(l1)
        for _ in range(40):
            if v1 == v0:
                break
            l2 = l1 - v1 * (l1 - l0) / (v1 - v0)
            l0, v0 = l1, v1
            l1 = l2
            v1 = volume(l1)
            if abs(l1 - l0) < 1e-13 * (1 + abs(l1)):
                break
        lam = l1
    ell, psi0 = inner(lam)
    if grid is None:
        grid = make_grid(p, 512, "uniform")
    sol = _integrate(p, F, lam, ell, psi0, R, t_eval=grid.r)
    if sol.status != 0 or sol.y.shape[1] != grid.n:
        raise ShootingError("final integration did not reach the outer radius")
    h = sol.y[0].copy()
    energy = sol.y[3, -1] + sol.y[4, -1] - p.cos_yp * float(boundary_measure(1.0, p.d)) * ell
    if not p.is_infinite:
        energy -= p.cos_yc * float(boundary_measure(R, p.d)) * (h[-1] - F)
    slope = psi0 / math.sqrt(1 - psi0 * psi0)
    return ShootResult(Profile(grid, h), float(lam), float(ell), float(slope), float(energy),
                       float(sol.y[2, -1]))


# --- stability probe -------------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    min_margin: float
    worst: str
    count: int
    stable: bool
    tol: float


def _bump(r, c, width):
    x = (r - c) / width
    out = np.where(np.abs(x) < 1, (1 - x * x) ** 3, 0.0)
    return out


def _competitor_directions(s: StableState, p: Params):
    r = s.grid.r
    W = weights(s.grid, p.d)
    q = W.q
    R = r[-1]
    n = r.size
    dirs = []

    def fix(v, comp):
        # volume-neutral and, for infinite R, zero at the Dirichlet node
        if p.is_infinite:
            v = v.copy()
            v[-1] = 0.0
            return v
        cq = float(np.dot(q, comp))
        return v - comp * (float(np.dot(q, v)) / cq)

    flat = np.ones(n)
    if p.is_infinite:
        flat = np.clip((R - r) / (R - 1), 0, 1)
    centers = np.linspace(1.0, R, 9)
    for i, c in enumerate(centers):
        for width in (0.5, max(1.0, (R - 1) / 6)):
            b = _bump(r, c, width)
            if not np.any(b):
                continue
            other = centers[(i + 4) % len(centers)]
            anti = _bump(r, other, width)
            if not np.any(anti):
                anti = flat
            dirs.append((f"bump@{c:.2f}/w{width:.2f}", fix(b, anti)))
    idx = np.unique(np.linspace(0, n - 2, 12).astype(int))
    for i in idx:
        v = np.zeros(n)
        v[i] = 1.0
        j = min(i + 1, n - 2)
        comp = np.zeros(n)
        comp[j] = 1.0
        if j == i:
            comp = flat
        dirs.append((f"tooth@{r[i]:.3f}", fix(v, comp)))
    for width in (0.2, 1.0, 3.0):
        v = np.clip(1 - (r - 1) / width, 0, None)
        tilt = (R - r) / (R - 1) if not p.is_infinite else flat
        dirs.append((f"contact-move/w{width}", fix(v, tilt)))
    return dirs


def stability_probe(s: StableState, p: Params, amplitudes=(1e-4, 1e-3, 1e-2, 1e-1),
                    tol: float = 1e-8) -> ProbeReport:
    """Energy + dissipation margins against a fixed battery of admissible competitors."""
    base = total_energy(s.profile, s.F, p).total
    worst, name, count = math.inf, "", 0
    for label, v in _competitor_directions(s, p):
        vmax = float(np.max(np.abs(v)))
        if vmax == 0:
            continue
        v = v / vmax
        for a in amplitudes:
            for sign in (1.0, -1.0):
                hh = s.h + sign * a * v
                e = total_energy(Profile(s.grid, hh), s.F, p).total
                m = e + dissipation(s.ell, float(hh[0]), p) - base
                count += 1
                if m < worst:
                    worst, name = m, f"{label} amp={sign * a:g}"
    return ProbeReport(float(worst), name, count, bool(worst >= -tol), tol)
