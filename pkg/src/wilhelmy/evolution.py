"""Minimizing-movements evolution, pressure bookkeeping and balance audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .energy import Profile, dissipation, flux, slopes, total_energy, weights
from .geometry import Params, RadialGrid, boundary_measure
from .solver import StableState, StepProblem, SolverError, Tolerances, minimize_step


# --- forcing -------------------------------------------------------------------

@dataclass(frozen=True)
class ForcingSchedule:
    """Piecewise-linear forcing F(t) through ``knots`` = [(t0, F0), (t1, F1), ...]."""

    knots: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        k = tuple((float(t), float(f)) for t, f in self.knots)
        if len(k) < 1:
            raise ValueError("schedule needs at least one knot")
        if k[0][0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        ts = [t for t, _ in k]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("schedule knot times must be strictly increasing")
        if not all(math.isfinite(v) for pair in k for v in pair):
            raise ValueError("schedule values must be finite")
        object.__setattr__(self, "knots", k)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.knots])

    @property
    def values(self) -> np.ndarray:
        return np.array([f for _, f in self.knots])

    @property
    def T(self) -> float:
        return self.knots[-1][0]

    def at(self, t):
        return np.interp(t, self.times, self.values)

    def __call__(self, t):
        return self.at(t)

    @property
    def total_variation(self) -> float:
        return float(np.sum(np.abs(np.diff(self.values))))

    @classmethod
    def preset(cls, name: str, amplitude: float = 1.0, base: float = 0.0, cycles: int = 1):
        a, b = amplitude, base
        if name == "ramp":
            return cls(((0.0, b), (1.0, b + a)))
        if name == "cycle":
            knots = [(0.0, b)]
            for k in range(cycles):
                knots += [(2.0 * k + 1.0, b + a), (2.0 * k + 2.0, b)]
            return cls(tuple(knots))
        if name == "staircase":
            return cls(((0.0, b), (1.0, b + a / 2), (2.0, b + a / 2), (3.0, b + a), (4.0, b + a)))
        raise ValueError(f"unknown schedule preset {name!r}")


def partition(schedule: ForcingSchedule, delta: float) -> np.ndarray:
    """Uniform-in-t partition of [0, T] with spacing <= delta that contains every knot."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    ts = schedule.times
    if ts.size == 1:
        return ts.copy()
    pieces = [np.array([0.0])]
    for a, b in zip(ts[:-1], ts[1:]):
        m = max(1, math.ceil((b - a) / delta - 1e-9))
        pieces.append(a + (b - a) * np.arange(1, m + 1) / m)
        pieces[-1][-1] = b
    return np.concatenate(pieces)


# --- pressures -----------------------------------------------------------------

def default_R0(p: Params, grid: RadialGrid) -> float:
    return min(4.0, 1.0 + 0.5 * (grid.outer - 1.0))


@lru_cache(maxsize=64)
def cutoff(grid: RadialGrid, R0: float, d: int) -> np.ndarray:
    """Cutoff V: zero near the plate, one beyond R0, discrete average one on [1, R0].

    A quintic smoothstep on [1.1, R0 - 0.1] plus a multiple of its derivative
    profile, chosen so that sum q_i (V_i - 1) = 0 exactly.
    """
    r = grid.r
    if not 1.0 < R0 < grid.outer:
        raise ValueError(f"R0 = {R0} must lie in (1, {grid.outer})")
    a, b = 1.1, R0 - 0.1
    if not b > a:
        raise ValueError(f"R0 = {R0} too close to the plate for the cutoff ramp")
    x = np.clip((r - a) / (b - a), 0.0, 1.0)
    ramp = x ** 3 * (10 - 15 * x + 6 * x * x)
    bump = 30 * x * x * (1 - x) ** 2
    q = weights(grid, d).q
    kappa = -float(np.dot(q, ramp - 1.0)) / float(np.dot(q, bump))
    V = ramp + kappa * bump
    V.setflags(write=False)
    return V


def pressure_contact_line(s: StableState, p: Params) -> float:
    """Contact-line pressure -σ cosθ_plate - w(R)(cosθ_container - cos_yc).

    The container part vanishes at equilibrium; it is kept so the formula is
    the derivative of the energy under the volume-preserving vertical flow
    for any angle pair.
    """
    sigma = float(boundary_measure(1.0, p.d))
    out = -sigma * s.cos_plate
    if not p.is_infinite:
        out -= float(boundary_measure(s.grid.outer, p.d)) * (s.cos_container - p.cos_yc)
    return float(out)


def pressure_weak(s: StableState, R0: float, p: Params) -> float:
    """Weak pressure: derivative of the energy along h -> h + tV, F -> F + t."""
    if not p.is_infinite and not 1.0 < R0 < p.R:
        raise ValueError(f"R0 = {R0} outside (1, R)")
    W = weights(s.grid, p.d)
    V = cutoff(s.grid, float(R0), p.d)
    psi = flux(slopes(s.h, W.dr))
    return float(np.dot(W.wbar * psi, np.diff(V)) + p.g * np.dot(W.q * (s.h - s.F), V - 1.0))


def flow(s: StableState, t: float, R0: float, p: Params) -> Tuple[Profile, float]:
    """Raise the forcing by t and the surface by tV (plate contact height fixed, volume kept)."""
    V = cutoff(s.grid, float(R0), p.d)
    return Profile(s.grid, s.h + t * V), s.F + t


def flow_fd_pressure(s: StableState, R0: float, p: Params, step: float = 1e-4) -> float:
    """Central difference of the energy along :func:`flow`."""
    hp, Fp = flow(s, step, R0, p)
    hm, Fm = flow(s, -step, R0, p)
    return (total_energy(hp, Fp, p).total - total_energy(hm, Fm, p).total) / (2 * step)


def flow_constant(grid: RadialGrid, R0: float, p: Params) -> float:
    """Bound on half the second derivative of the energy along the flow.

    Uses (1+s^2)^{-3/2} <= 1 for the area density, so it holds for every
    profile on the grid.
    """
    W = weights(grid, p.d)
    V = cutoff(grid, float(R0), p.d)
    dV = np.diff(V)
    return 0.5 * float(np.sum(W.wbar * dV * dV / W.dr) + p.g * np.dot(W.q, (V - 1.0) ** 2))


# --- trace -------------------------------------------------------------------------

TRACE_COLUMNS = ("t", "F", "ell", "lambda", "cos_plate", "cos_container", "regime",
                 "E_total", "diss_inc", "diss_cum", "P_contact", "P_weak")


@dataclass
class EvolutionTrace:
    params: Params
    R0: float
    states: List[StableState] = field(default_factory=list)
    t: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    diss_inc: List[float] = field(default_factory=list)
    diss_cum: List[float] = field(default_factory=list)
    P_contact: List[float] = field(default_factory=list)
    P_weak: List[float] = field(default_factory=list)

    def append(self, t: float, s: StableState, d_inc: float) -> None:
        if self.t and not t > self.t[-1]:
            raise ValueError("trace times must be strictly increasing")
        self.states.append(s)
        self.t.append(float(t))
        self.energy.append(total_energy(s.profile, s.F, self.params).total)
        self.diss_inc.append(float(d_inc))
        self.diss_cum.append((self.diss_cum[-1] if self.diss_cum else 0.0) + float(d_inc))
        self.P_contact.append(pressure_contact_line(s, self.params))
        self.P_weak.append(pressure_weak(s, self.R0, self.params))

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        if name == "F":
            return np.array([s.F for s in self.states])
        if name == "ell":
            return np.array([s.ell for s in self.states])
        if name == "lambda":
            return np.array([s.lam for s in self.states])
        if name in ("cos_plate", "cos_container", "regime"):
            return np.array([getattr(s, name) for s in self.states])
        if name == "E_total":
            return np.array(self.energy)
        return np.array(getattr(self, name))

    @property
    def flux(self) -> np.ndarray:
        """Q on [t_i, t_{i+1}) as contact pressure times the forcing rate (0 after the last step)."""
        t, F = np.array(self.t), self.column("F")
        out = np.zeros(len(self))
        if len(self) > 1:
            out[:-1] = np.array(self.P_contact[:-1]) * np.diff(F) / np.diff(t)
        return out

    def rows(self):
        for i, s in enumerate(self.states):
            yield (self.t[i], s.F, s.ell, s.lam, s.cos_plate, s.cos_container, s.regime,
                   self.energy[i], self.diss_inc[i], self.diss_cum[i], self.P_contact[i], self.P_weak[i])

    def index_of(self, t: float) -> int:
        ts = np.array(self.t)
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a trace time (range [{ts[0]}, {ts[-1]}])")
        return i


def run(schedule: ForcingSchedule, delta: float, p: Params, init: StableState,
        times: Optional[Sequence[float]] = None, forcing: Optional[Callable] = None,
        R0: Optional[float] = None, tol: Tolerances = Tolerances()) -> EvolutionTrace:
    """Apply the incremental scheme over the partition of [0, T].

    ``times``/``forcing`` override the default partition and schedule, which
    the rate-independence check uses for reparametrized runs.
    """
    forcing = forcing if forcing is not None else schedule.at
    ts = np.asarray(times, dtype=float) if times is not None else partition(schedule, delta)
    F0 = float(forcing(ts[0]))
    if abs(F0 - init.F) > 1e-12 * (1 + abs(F0)):
        raise ValueError(f"initial state has F = {init.F}, schedule starts at {F0}")
    R0 = R0 if R0 is not None else default_R0(p, init.grid)
    trace = EvolutionTrace(p, float(R0))
    trace.append(ts[0], init, 0.0)
    s = init
    for k in range(1, ts.size):
        F_new = float(forcing(ts[k]))
        if F_new == s.F:
            trace.append(ts[k], s, 0.0)
            continue
        try:
            nxt = minimize_step(StepProblem(s, F_new, p, tol))
        except SolverError as exc:
            raise SolverError(f"step {k} (t = {ts[k]:.6g}, F = {F_new:.6g}): {exc}") from exc
        trace.append(ts[k], nxt, dissipation(s.ell, nxt.ell, p))
        s = nxt
    return trace


# --- audits --------------------------------------------------------------------------

@dataclass(frozen=True)
class EDBReport:
    residual: float
    budget: float
    C: float
    sum_dF2: float
    energy_drop: float
    work: float
    dissipation: float

    @property
    def within_budget(self) -> bool:
        return abs(self.residual) <= self.budget


def edb_report(trace: EvolutionTrace, t0: float, t1: float) -> EDBReport:
    """Energy-dissipation balance residual over [t0, t1] with its quadratic budget.

    residual = E(t0) - E(t1) + sum P*_i dF_i - sum Diss, left-point pressures.
    The budget constant adds the flow curvature bound and the largest observed
    pressure increment per unit forcing.
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    i0, i1 = trace.index_of(t0), trace.index_of(t1)
    E = np.array(trace.energy)
    F = trace.column("F")
    P = np.array(trace.P_weak)
    dF = np.diff(F[i0:i1 + 1])
    work = float(np.dot(P[i0:i1], dF))
    diss = float(np.sum(trace.diss_inc[i0 + 1:i1 + 1]))
    drop = float(E[i0] - E[i1])
    residual = drop + work - diss
    moving = dF != 0
    lip = 0.0
    if np.any(moving):
        lip = float(np.max(np.abs(np.diff(P[i0:i1 + 1]))[moving] / np.abs(dF[moving])))
    C = flow_constant(trace.states[0].grid, trace.R0, trace.params) + lip
    s2 = float(np.dot(dF, dF))
    return EDBReport(residual, C * s2, C, s2, drop, work, diss)


@dataclass(frozen=True)
class LoopMetrics:
    area_F_ell: float       # shoelace area of the (F, ell) loop
    work: float             # left-point sum of P* dF around the loop
    work_trapezoid: float
    dissipation: float
    energy_change: float


def loop_metrics(trace: EvolutionTrace, i0: int, i1: int) -> LoopMetrics:
    F = trace.column("F")[i0:i1 + 1]
    ell = trace.column("ell")[i0:i1 + 1]
    P = np.array(trace.P_weak[i0:i1 + 1])
    x, y = F, ell
    area = 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]) + (x[-1] * y[0] - x[0] * y[-1]))
    dF = np.diff(F)
    return LoopMetrics(abs(area), float(np.dot(P[:-1], dF)), float(np.dot(0.5 * (P[:-1] + P[1:]), dF)),
                       float(np.sum(trace.diss_inc[i0 + 1:i1 + 1])),
                       float(trace.energy[i1] - trace.energy[i0]))


@dataclass(frozen=True)
class GronwallReport:
    lhs: float
    rhs: float
    energy_sup: float
    energy_bound: float
    A0: float
    C: float
    C0: float
    variation: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs and self.energy_sup <= self.energy_bound


def dissipation_bound(trace: EvolutionTrace) -> GronwallReport:
    """Discrete Gronwall bound on energy change plus dissipation.

    Constants are instantiated from the trace: C0 shifts the energy positive,
    and C is the smallest rate with |P*_i| + C_flow |dF_i| <= C (C0 + E_i).
    """
    E = np.array(trace.energy)
    F = trace.column("F")
    P = np.array(trace.P_weak)
    dF = np.diff(F)
    C0 = max(0.0, -float(E.min())) + 1.0
    Et = C0 + E
    cf = flow_constant(trace.states[0].grid, trace.R0, trace.params)
    C = 0.0
    if dF.size:
        C = float(np.max((np.abs(P[:-1]) + cf * np.abs(dF)) / Et[:-1]))
    bv = float(np.sum(np.abs(dF)))
    A0 = float(Et[0])
    lhs = float(E[-1] - E[0] + np.sum(trace.diss_inc[1:]))
    rhs = A0 * math.exp(C * bv) * C * bv
    return GronwallReport(lhs, rhs, float(Et.max()), A0 * math.exp(C * bv), A0, C, C0, bv)


@dataclass(frozen=True)
class Reparam:
    """Monotone time map new-time -> old-time with its inverse."""

    forward: Callable[[float], float]
    inverse: Callable[[float], float]

    @classmethod
    def identity(cls):
        return cls(lambda s: s, lambda t: t)

    @classmethod
    def quadratic(cls, T: float):
        return cls(lambda s: s * s / T, lambda t: math.sqrt(t * T))


@dataclass(frozen=True)
class RateReport:
    passed: bool
    max_ell_dev: float
    max_profile_dev: float
    matched: bool


def rate_independence_check(schedule: ForcingSchedule, reparam: Reparam, delta: float, p: Params,
                            init: StableState, matched: bool = True, tol: float = 1e-9) -> RateReport:
    """Compare a run against a reparametrized one.

    With ``matched`` the second run's partition is the preimage of the first,
    so both visit the same forcing values.  Otherwise it uses its own uniform
    partition of the new time interval and states are compared at equal F.
    """
    base = run(schedule, delta, p, init)
    T = schedule.T
    T_new = reparam.inverse(T)

    def G(s):
        return schedule.at(min(reparam.forward(s), T))

    if matched:
        ts = np.array([reparam.inverse(t) for t in base.t])
        ts[0], ts[-1] = 0.0, T_new
    else:
        m = len(base.t) - 1
        ts = np.linspace(0.0, T_new, m + 1)
    other = run(schedule, delta, p, init, times=ts, forcing=G)
    if matched:
        pairs = list(zip(base.states, other.states))
    else:
        # pair each base state with the reparametrized state nearest in mapped time
        mapped = np.array([reparam.forward(s) for s in other.t])
        pairs = [(s, other.states[int(np.argmin(np.abs(mapped - t)))]) for t, s in zip(base.t, base.states)]
    dl, dh = 0.0, 0.0
    for a, b in pairs:
        dl = max(dl, abs(a.ell - b.ell))
        dh = max(dh, float(np.max(np.abs(a.h - b.h))))
    return RateReport(bool(max(dl, dh) <= tol), dl, dh, matched)
