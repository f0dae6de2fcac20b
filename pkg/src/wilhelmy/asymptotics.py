"""Quantitative structure checks: multiplier decomposition, width decay,
barriers, reference configurations, energy asymptotics and the container limit."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .energy import Profile, flux, mean_curvature, total_energy, weights
from .evolution import ForcingSchedule, run
from .geometry import (INFINITE, Params, RadialGrid, annulus_volume, boundary_measure,
                       grid_with_spacing, unit_ball_volume)
from .solver import YOUNG, StableState, multiplier_estimate, solve_equilibrium


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def level(s: StableState, p: Params) -> float:
    """Far-field height F + λ/g."""
    return s.F + s.lam / p.g


# --- multiplier -----------------------------------------------------------------

def leading_term(R: float, p: Params) -> float:
    return -p.cos_yc * float(boundary_measure(R, p.d)) / annulus_volume(R, p.d)


def a0_candidates(p: Params) -> Dict[str, float]:
    """Both closed forms of the limiting coefficient built from unit-ball volumes."""
    ratio = unit_ball_volume(p.d - 2) / unit_ball_volume(p.d - 1)
    return {"minus_cos_yc_omega_ratio": -p.cos_yc * ratio,
            "plus_cos_yc_omega_ratio": p.cos_yc * ratio,
            "minus_cos_yc_times_d_minus_1": -p.cos_yc * (p.d - 1)}


def measured_a0(R: float, p: Params) -> float:
    return R * leading_term(R, p)


@dataclass(frozen=True)
class MultiplierDecomposition:
    lam: float
    leading: float
    remainder: float
    remainder_scaled: float
    bound: float

    @property
    def holds(self) -> bool:
        return abs(self.remainder_scaled) <= self.bound


def lambda_decomposition_check(s: StableState, p: Params, slack: float = 1e-8) -> MultiplierDecomposition:
    if p.is_infinite:
        raise ValueError("multiplier decomposition needs finite R")
    R = s.grid.outer
    lead = leading_term(R, p)
    rem = s.lam - lead
    sigma = float(boundary_measure(1.0, p.d))
    bound = sigma * (abs(p.cos_yp) + max(p.mu_plus, p.mu_minus)) + slack
    return MultiplierDecomposition(s.lam, lead, rem, rem * annulus_volume(R, p.d), bound)


@dataclass
class LambdaSweep:
    R: List[float]
    decompositions: List[MultiplierDecomposition]
    slope: float

    @property
    def all_bounded(self) -> bool:
        return all(m.holds for m in self.decompositions)


def lambda_sweep(p: Params, R_list: Sequence[float] = (8, 16, 32, 64), F: float = 0.0,
                 spacing: float = 0.05) -> LambdaSweep:
    decs = []
    for R in R_list:
        pR = p.replace(R=float(R))
        s = solve_equilibrium(F, pR, YOUNG, grid_with_spacing(R, spacing))
        decs.append(lambda_decomposition_check(s, pR))
    rem = [abs(m.remainder) for m in decs]
    slope = loglog_slope(R_list, rem) if min(rem) > 0 else -math.inf
    return LambdaSweep(list(map(float, R_list)), decs, slope)


# --- width bound ------------------------------------------------------------------

@dataclass(frozen=True)
class WidthFit:
    C: float              # envelope amplitude for the fitted rate
    c: float              # fitted decay rate
    residual: float       # rms of the log-linear fit
    level: float
    C_fit: float          # amplitude from the regression intercept
    exactly_flat: bool = False
    layers_overlap: bool = False
    bound_holds: bool = True
    fit_range: tuple = (1.0, 1.0)


def _width_fit_core(r, dev, R):
    mid = 0.5 * (1.0 + R)
    inner = r <= mid
    peak = float(dev[inner].max())
    floor = max(1e-9 * peak, 1e-13)
    use = inner & (dev > floor)
    # stop at the first node that falls below the floor (ignore recrossings)
    idx = np.nonzero(inner)[0]
    last = idx[-1]
    below = np.nonzero(dev[idx] <= floor)[0]
    if below.size:
        last = idx[below[0]] - 1
    use &= np.arange(r.size) <= last
    slope, intercept = np.polyfit(r[use], np.log(dev[use]), 1)
    fitted = intercept + slope * r[use]
    rms = float(np.sqrt(np.mean((np.log(dev[use]) - fitted) ** 2)))
    return -float(slope), float(math.exp(intercept)), rms, (float(r[use][0]), float(r[use][-1]))


def width_bound_fit(s: StableState, p: Params) -> WidthFit:
    r, h = s.grid.r, s.h
    R = s.grid.outer
    lev = level(s, p)
    dev = np.abs(h - lev)
    if float(dev.max()) == 0.0:
        return WidthFit(0.0, math.inf, 0.0, lev, 0.0, exactly_flat=True)
    overlap = R < 8
    c, C_fit, rms, rng = _width_fit_core(r, dev, R)
    env = np.exp(-c * r) + np.exp(-c * (R - r))
    C = float(np.max(dev / env)) * (1 + 1e-12)
    holds = bool(np.all(dev <= C * env))
    return WidthFit(C, c, rms, lev, C_fit, False, overlap, holds, rng)


# --- barriers ---------------------------------------------------------------------

def _c(s):
    return s / np.sqrt(1.0 + s * s)


@dataclass(frozen=True)
class BarrierReport:
    interior: float
    plate: float
    container: float
    interior_argmin: float
    interior_relative: float = math.nan  # min of (-H + g psi) / psi, immune to underflow

    @property
    def margins(self) -> Dict[str, float]:
        return {"interior": self.interior, "interior_relative": self.interior_relative,
                "plate": self.plate, "container": self.container}

    @property
    def passed(self) -> bool:
        return min(self.interior_relative, self.plate, self.container) > 0


def barrier_profile(r, a, A, b, B, R):
    e1 = A * np.exp(-a * r / A)
    e2 = B * np.exp(-b * (R - r) / B)
    psi = e1 + e2
    d1 = -a / A * e1 + b / B * e2
    d2 = (a / A) ** 2 * e1 + (b / B) ** 2 * e2
    return psi, d1, d2


def barrier_check(a: float, A: float, b: float, B: float, p: Params, n: int = 20001) -> BarrierReport:
    """Supersolution margins of psi = A e^{-ar/A} + B e^{-b(R-r)/B}."""
    R = p.outer_radius
    r = np.linspace(1.0, R, n)
    psi, d1, d2 = barrier_profile(r, a, A, b, B, R)
    k = 1.0 + d1 * d1
    H = d2 / k ** 1.5 + (p.d - 2) / r * d1 / np.sqrt(k)
    interior = -H + p.g * psi
    i = int(np.argmin(interior[1:-1])) + 1
    rel = float(np.min((interior / psi)[1:-1]))
    plate = float(-_c(d1[0]) - (p.cos_yp + p.mu_minus))
    container = float(_c(d1[-1]) - p.cos_yc)
    return BarrierReport(float(interior[i]), plate, container, float(r[i]), rel)


def barrier_recipe(p: Params, safety: float = 1.1, max_rounds: int = 60):
    """(a, A, b, B) following the construction: slope from the target angle,
    amplitude from g A^2 - (d-2) a A - a^2 >= 0 and e^{-a/A} >= 1/2.

    When the two boundary layers are not well separated, each wall also has
    to beat the tail of the other one; the slope targets are raised until
    both contact conditions hold.
    """
    R = p.outer_radius

    def slope(t):
        # floor the target so the wall slope dominates the other wall's tail
        t = min(max(t, 0.05), 0.999)
        return t / math.sqrt(1 - t * t)

    def pick(s):
        a = 2.0 * safety * s
        root = ((p.d - 2) * a + math.sqrt(((p.d - 2) * a) ** 2 + 4 * p.g * a * a)) / (2 * p.g)
        return a, safety * max(root, a / math.log(2.0))

    sp, sc = slope(p.cos_yp + p.mu_minus), slope(abs(p.cos_yc))
    tp = tc = 0.0
    for _ in range(max_rounds):
        (a, A), (b, B) = pick(sp + tp), pick(sc + tc)
        tail_at_plate = b * math.exp(-b * (R - 1) / B)
        tail_at_wall = a * math.exp(-a * R / A)
        if tail_at_plate <= tp and tail_at_wall <= tc:
            break
        tp, tc = safety * tail_at_plate, safety * tail_at_wall
    return a, A, b, B


# --- reference configuration -------------------------------------------------------

def reference_config(R: float, F: float, p: Params, grid: Optional[RadialGrid] = None,
                     spacing: float = 0.05) -> StableState:
    """Unconstrained Young-angle equilibrium at F = 0 raised to F + a0/(gR).

    The returned multiplier is read from the discrete Euler-Lagrange residual
    of the shifted profile.
    """
    if math.isinf(R):
        raise ValueError("reference configuration needs finite R")
    pR = p.replace(R=float(R))
    grid = grid if grid is not None else grid_with_spacing(R, spacing)
    base = solve_equilibrium(0.0, pR, YOUNG, grid, constrained=False)
    a0 = measured_a0(R, pR)
    prof = base.profile.shifted(F + a0 / (p.g * R))
    lam = multiplier_estimate(prof, F, pR)
    return StableState(prof, float(F), lam, base.cos_plate, base.cos_container, base.regime,
                       base.newton_iters, base.kkt_residual)


def _partial_weights(grid: RadialGrid, d: int, R0: float):
    r = grid.r
    mask = r >= R0 - 1e-12
    sub = r[mask]
    w = boundary_measure(sub, d)
    dr = np.diff(sub)
    q = np.zeros_like(sub)
    q[:-1] += 0.5 * dr * w[:-1]
    q[1:] += 0.5 * dr * w[1:]
    return mask, sub, dr, 0.5 * (w[:-1] + w[1:]), q


def energy_asymptotics_check(s: StableState, R0: float, p: Params,
                             ref: Optional[StableState] = None) -> Dict[str, float]:
    """Differences between a stable state and the reference configuration on [R0, R]."""
    R = s.grid.outer
    if not 1.0 < R0 < R:
        raise ValueError("need 1 < R0 < R")
    ref = ref if ref is not None else reference_config(R, s.F, p, grid=s.grid)
    if ref.grid != s.grid:
        raise ValueError("state and reference must share a grid")
    mask, sub, dr, wbar, q = _partial_weights(s.grid, p.d, R0)
    h, hr = s.h[mask], ref.h[mask]
    F = s.F
    sa = np.diff(h) / dr
    sb = np.diff(hr) / dr
    return {
        "volume": abs(float(np.dot(q, h - hr))),
        "container": float(boundary_measure(R, p.d)) * abs(float(s.h[-1] - ref.h[-1])),
        "gravity": abs(float(np.dot(q, 0.5 * p.g * ((h - F) ** 2 - (hr - F) ** 2)))),
        "perimeter": abs(float(np.dot(wbar * dr, np.sqrt(1 + sa * sa) - np.sqrt(1 + sb * sb)))),
    }


def asymptotic_rates(R: float, R0: float, c: float) -> Dict[str, float]:
    tail = math.log(R) / R + math.exp(-c * R0)
    return {"volume": 1.0, "container": 1.0 / R, "gravity": tail, "perimeter": tail}


@dataclass
class EnergyAsymptoticsSweep:
    R: List[float]
    R0: float
    rows: List[Dict[str, float]]
    constants: Dict[str, float]
    container_slope: float


def energy_asymptotics_sweep(p: Params, R_list=(8, 16, 32, 64), R0: float = 4.0, F: float = 0.0,
                             spacing: float = 0.05) -> EnergyAsymptoticsSweep:
    rows = []
    for R in R_list:
        pR = p.replace(R=float(R))
        grid = grid_with_spacing(R, spacing)
        s = solve_equilibrium(F, pR, YOUNG, grid)
        rows.append(energy_asymptotics_check(s, R0, pR))
    c = math.sqrt(p.g)
    consts = {k: max(row[k] / asymptotic_rates(R, R0, c)[k] for R, row in zip(R_list, rows))
              for k in rows[0]}
    cont = [row["container"] for row in rows]
    slope = loglog_slope(R_list, cont) if min(cont) > 0 else -math.inf
    return EnergyAsymptoticsSweep(list(map(float, R_list)), R0, rows, consts, slope)


# --- tilde surgery -------------------------------------------------------------------

@dataclass(frozen=True)
class SurgeryReport:
    R: float
    E_inf_tilde: float
    E_R: float
    E_correction: float
    gap: float
    a0: float
    shifted: bool


def _surgered(s: StableState, R: float, top: float) -> Profile:
    h = np.where(s.grid.r <= 0.5 * R + 1e-12, s.h, top)
    return Profile(s.grid, h)


def tilde_surgery(s: StableState, p: Params, ref: Optional[StableState] = None,
                  shift: bool = True) -> SurgeryReport:
    """Relative-energy gap E_inf[L~] - (E_R[L] + E(R)).

    L~ keeps L on [1, R/2] and is flat at the shifted forcing F + a0/(gR)
    beyond; E(R) is the same surgery applied to the reference configuration.
    ``shift=False`` drops the a0/(gR) offset from L~ only (ablation); the
    correction E(R) is unchanged.
    """
    if p.is_infinite:
        raise ValueError("surgery needs finite R")
    R = s.grid.outer
    a0 = measured_a0(R, p)
    Fs = s.F + a0 / (p.g * R)
    Ft = Fs if shift else s.F
    ref = ref if ref is not None else reference_config(R, s.F, p, grid=s.grid)
    p_inf = p.replace(R=INFINITE, R_trunc=R)
    e_tilde = total_energy(_surgered(s, R, Ft), Ft, p_inf).total
    e_R = total_energy(s.profile, s.F, p).total
    e_corr = (total_energy(_surgered(ref, R, Fs), Fs, p_inf).total
              - total_energy(ref.profile, ref.F, p).total)
    return SurgeryReport(R, e_tilde, e_R, e_corr, e_tilde - e_R - e_corr, a0, shift)


def surgery_sweep(p: Params, R_list=(8, 16, 32, 64), F: float = 0.0, spacing: float = 0.05,
                  shift: bool = True):
    reps = []
    for R in R_list:
        pR = p.replace(R=float(R))
        s = solve_equilibrium(F, pR, YOUNG, grid_with_spacing(R, spacing))
        reps.append(tilde_surgery(s, pR, shift=shift))
    gaps = [abs(r.gap) for r in reps]
    slope = loglog_slope(R_list, gaps) if min(gaps) > 0 else -math.inf
    return reps, slope


# --- container-limit sweep -----------------------------------------------------------

@dataclass
class SweepTable:
    R: List[float]
    t: np.ndarray
    F: np.ndarray
    ell: Dict[str, np.ndarray]
    plate_pressure: Dict[str, np.ndarray]
    energy_increments: Dict[str, np.ndarray]
    max_dev: Dict[str, float]
    dissipation: Dict[str, float]
    slope: float
    dissipation_variation: float

    def key(self, R) -> str:
        return "inf" if math.isinf(R) else f"{float(R):g}"


def _sweep_one(args):
    schedule, R, delta, p, spacing, R_trunc = args
    if math.isinf(R):
        pR = p.replace(R=INFINITE, R_trunc=R_trunc)
        grid = grid_with_spacing(R_trunc, spacing)
    else:
        pR = p.replace(R=float(R))
        grid = grid_with_spacing(R, spacing)
    init = solve_equilibrium(float(schedule.at(0.0)), pR, YOUNG, grid)
    tr = run(schedule, delta, pR, init)
    sigma = float(boundary_measure(1.0, p.d))
    return (np.array(tr.t), tr.column("F"), tr.column("ell"), -sigma * tr.column("cos_plate"),
            np.diff(np.array(tr.energy)), tr.diss_cum[-1])


def r_sweep(schedule: ForcingSchedule, R_list: Sequence[float], delta: float, p: Params,
            spacing: float = 0.05, R_trunc: float = 30.0, workers: int = 1) -> SweepTable:
    Rs = [float(R) for R in R_list]
    jobs = [(schedule, R, delta, p, spacing, R_trunc) for R in Rs + [math.inf]]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    keys = ["inf" if math.isinf(j[1]) else f"{j[1]:g}" for j in jobs]
    t, F = results[0][0], results[0][1]
    ell = {k: res[2] for k, res in zip(keys, results)}
    press = {k: res[3] for k, res in zip(keys, results)}
    dE = {k: res[4] for k, res in zip(keys, results)}
    diss = {k: float(res[5]) for k, res in zip(keys, results)}
    dev = {k: float(np.max(np.abs(ell[k] - ell["inf"]))) for k in keys[:-1]}
    devs = [dev[k] for k in keys[:-1]]
    slope = loglog_slope(Rs, devs) if len(Rs) > 1 and min(devs) > 0 else -math.inf
    dvals = np.array(list(diss.values()))
    var = float((dvals.max() - dvals.min()) / dvals.mean()) if dvals.mean() > 0 else 0.0
    return SweepTable(Rs, t, F, ell, press, dE, dev, diss, slope, var)


# --- sliding comparison ----------------------------------------------------------------

@dataclass(frozen=True)
class SlidingReport:
    holds: bool
    margin: float
    t_star: float
    t_used: float
    sup_diff: float
    level_gap: float
    h0: float


def sliding_comparison_check(s0: StableState, s1: StableState, r0: float, p: Params,
                             t: Optional[float] = None, eps: float = 1e-6) -> SlidingReport:
    """Check h1 - t <= h0 <= h1 + t on [r0, R] for t just above the threshold.

    The threshold is max(|level0 - level1|, 2 h0) with level = F + λ/g and h0
    the oscillation at r0 about the mean forcing; with equal forcings this is
    max(|Δλ|/g, 2 h0).
    """
    if s0.grid != s1.grid:
        raise ValueError("states must share a grid")
    r = s0.grid.r
    if not 1.0 < r0 < r[-1]:
        raise ValueError("r0 must lie inside (1, R)")
    Fm = 0.5 * (s0.F + s1.F)
    h0r = np.interp(r0, r, s0.h)
    h1r = np.interp(r0, r, s1.h)
    h0 = max(abs(h0r - Fm), abs(h1r - Fm))
    gap = abs(level(s0, p) - level(s1, p))
    t_star = max(gap, 2.0 * h0)
    t_used = t_star + eps if t is None else t
    mask = r >= r0
    diff = np.abs(s0.h[mask] - s1.h[mask])
    # include the interpolated boundary value at r0 itself
    sup = max(float(diff.max()), abs(h0r - h1r))
    margin = t_used - sup
    return SlidingReport(bool(margin >= 0), float(margin), float(t_star), float(t_used), sup, gap, float(h0))
