"""Command line entry point.

    wilhelmy {solve,evolve,sweep-r,barriers,validate} --config run.cfg [--out DIR]

Data files (CSV/JSON) are byte-stable for a given config.  The wall-clock
timestamp and library versions go to ``metadata.json`` only.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import platform
import sys
import traceback
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from . import __version__
from . import io as wio
from .asymptotics import (a0_candidates, barrier_check, barrier_profile, barrier_recipe,
                          lambda_decomposition_check, level, measured_a0, r_sweep)
from .checks import run_all
from .config import ConfigError, RunConfig, load_config
from .energy import total_energy, volume_functional
from .evolution import (default_R0, dissipation_bound, edb_report, loop_metrics,
                        pressure_contact_line, pressure_weak, run)
from .geometry import make_grid
from .solver import YOUNG, Band, Pinned, check_state, solve_equilibrium, stability_probe

COMMANDS = ("solve", "evolve", "sweep-r", "barriers", "validate")


class Context:
    def __init__(self, cfg: RunConfig, out: Path, seedless: bool, quiet: bool):
        self.cfg, self.out, self.seedless, self.quiet = cfg, out, seedless, quiet
        self.written = []
        self.runtimes = {}

    def log(self, msg: str) -> None:
        if not self.quiet:
            print(msg, flush=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.written.append(p.name)
        return p

    def grid(self, p=None):
        return make_grid(p or self.cfg.params, self.cfg.N, self.cfg.grading)


def _mode(cfg: RunConfig):
    if cfg.solve_mode == "pinned":
        return Pinned(cfg.solve_ell)
    if cfg.solve_mode == "band":
        return Band(cfg.solve_ell)
    return YOUNG


def cmd_solve(ctx: Context) -> bool:
    cfg, p = ctx.cfg, ctx.cfg.params
    F = cfg.solve_F if cfg.solve_F is not None else float(cfg.schedule.at(0.0))
    s = solve_equilibrium(F, p, _mode(cfg), ctx.grid(), tol=cfg.tol)
    problems = check_state(s, p, cfg.tol)
    R0 = default_R0(p, s.grid)
    energy = total_energy(s.profile, F, p)
    outputs = {"F": s.F, "lambda": s.lam, "ell": s.ell, "level": level(s, p),
               "cos_plate": s.cos_plate, "cos_container": s.cos_container, "regime": s.regime,
               "newton_iters": s.newton_iters, "kkt_residual": s.kkt_residual,
               "energy": energy.as_dict(), "P_contact": pressure_contact_line(s, p),
               "P_weak": pressure_weak(s, R0, p), "R0": R0, "violations": problems}
    if not p.is_infinite:
        outputs["volume"] = volume_functional(s.profile, F, p)
    lo, hi = p.band
    margins = {"kkt": cfg.tol.kkt_tol(s.lam) - s.kkt_residual,
               "band_low": s.cos_plate - lo, "band_high": hi - s.cos_plate}
    inputs = {"mode": cfg.solve_mode, "ell": cfg.solve_ell, "N": cfg.N, "grading": cfg.grading}
    if cfg.wants("csv"):
        wio.write_profile_csv(ctx.path("profile.csv"), s.profile)
    if cfg.wants("json"):
        wio.write_json(ctx.path("state.json"), wio.report("solve", p, inputs, outputs, margins, not problems))
    if cfg.wants("png"):
        from .plotting import profile_figure
        profile_figure(ctx.path("profile.png"), s.profile, level(s, p), f"{s.regime}, λ = {s.lam:.4g}")
    ctx.log(f"solve: F={s.F:g} ell={s.ell:.10g} lambda={s.lam:.6g} regime={s.regime}")
    for msg in problems:
        ctx.log(f"  violation: {msg}")
    return not problems


def cmd_evolve(ctx: Context) -> bool:
    cfg, p = ctx.cfg, ctx.cfg.params
    init = solve_equilibrium(float(cfg.schedule.at(0.0)), p, YOUNG, ctx.grid(), tol=cfg.tol)
    trace = run(cfg.schedule, cfg.delta, p, init, tol=cfg.tol)
    T = float(trace.t[-1])
    edb = edb_report(trace, 0.0, T)
    loop = loop_metrics(trace, 0, len(trace) - 1)
    gw = dissipation_bound(trace)
    ok = edb.within_budget and gw.holds
    outputs = {"edb": edb, "loop": loop, "gronwall": gw, "steps": len(trace) - 1,
               "final_ell": trace.states[-1].ell}
    margins = {"edb": edb.budget - abs(edb.residual), "gronwall": gw.rhs - gw.lhs}
    inputs = {"knots": [list(k) for k in cfg.schedule.knots], "delta": cfg.delta, "N": cfg.N,
              "grading": cfg.grading, "R0": trace.R0}
    if cfg.wants("csv"):
        wio.write_trace_csv(ctx.path("trace.csv"), trace)
    if cfg.wants("json"):
        wio.write_json(ctx.path("edb.json"), wio.report("evolve", p, inputs, outputs, margins, ok))
    if cfg.wants("png"):
        from .plotting import trace_figure
        trace_figure(ctx.path("trace.png"), trace)
    ctx.log(f"evolve: {len(trace) - 1} steps, EDB residual {edb.residual:.3e} (budget {edb.budget:.3e}), "
            f"dissipation {trace.diss_cum[-1]:.6g}")
    return ok


def cmd_sweep(ctx: Context) -> bool:
    cfg, p = ctx.cfg, ctx.cfg.params
    tab = r_sweep(cfg.schedule, cfg.R_list, cfg.delta, p, spacing=cfg.sweep_spacing,
                  R_trunc=cfg.sweep_R_trunc, workers=cfg.workers)
    keys = [tab.key(R) for R in tab.R] + ["inf"]
    header = ["t", "F"] + [f"ell_R{k}" for k in keys] + [f"P_R{k}" for k in keys]
    rows = [[tab.t[i], tab.F[i]] + [tab.ell[k][i] for k in keys] + [tab.plate_pressure[k][i] for k in keys]
            for i in range(len(tab.t))]
    slope_ok = len(tab.R) < 2 or tab.slope <= -0.7
    ok = slope_ok and tab.dissipation_variation < 0.2
    outputs = {"max_dev": tab.max_dev, "slope": tab.slope, "dissipation": tab.dissipation,
               "dissipation_variation": tab.dissipation_variation,
               "a0_measured": {tab.key(R): measured_a0(R, p) for R in tab.R},
               "a0_candidates": a0_candidates(p)}
    margins = {"slope": -0.7 - tab.slope, "dissipation_variation": 0.2 - tab.dissipation_variation}
    inputs = {"R_list": list(tab.R), "spacing": cfg.sweep_spacing, "R_trunc": cfg.sweep_R_trunc,
              "delta": cfg.delta, "knots": [list(k) for k in cfg.schedule.knots]}
    if cfg.wants("csv"):
        wio.write_rows(ctx.path("sweep.csv"), header, rows)
        wio.write_rows(ctx.path("sweep_summary.csv"), ("R", "max_dev", "dissipation"),
                       [(R, tab.max_dev[tab.key(R)], tab.dissipation[tab.key(R)]) for R in tab.R])
    if cfg.wants("json"):
        wio.write_json(ctx.path("sweep.json"), wio.report("sweep-r", p, inputs, outputs, margins, ok))
    if cfg.wants("png"):
        from .plotting import sweep_figure
        sweep_figure(ctx.path("sweep.png"), tab)
    ctx.log(f"sweep-r: slope {tab.slope:.3f}, dissipation variation {tab.dissipation_variation:.3%}")
    return ok


def cmd_barriers(ctx: Context) -> bool:
    cfg, p = ctx.cfg, ctx.cfg.params
    source = "config" if cfg.barrier is not None else "recipe"
    a, A, b, B = cfg.barrier if cfg.barrier is not None else barrier_recipe(p, cfg.barrier_safety)
    rep = barrier_check(a, A, b, B, p)
    inputs = {"a": a, "A": A, "b": b, "B": B, "source": source, "safety": cfg.barrier_safety}
    outputs = {"interior_min": rep.interior, "interior_argmin": rep.interior_argmin}
    if cfg.wants("json"):
        wio.write_json(ctx.path("barriers.json"),
                       wio.report("barriers", p, inputs, outputs, rep.margins, rep.passed))
    if cfg.wants("csv") or cfg.wants("png"):
        R = p.outer_radius
        r = np.linspace(1.0, R, 2001)
        psi, d1, d2 = barrier_profile(r, a, A, b, B, R)
        k = 1.0 + d1 * d1
        interior = -(d2 / k ** 1.5 + (p.d - 2) / r * d1 / np.sqrt(k)) + p.g * psi
        if cfg.wants("csv"):
            wio.write_rows(ctx.path("barriers.csv"), ("r", "psi", "interior"), zip(r, psi, interior))
        if cfg.wants("png"):
            from .plotting import barrier_figure
            barrier_figure(ctx.path("barriers.png"), r, psi, interior)
    ctx.log("barriers: " + ", ".join(f"{k}={v:.4g}" for k, v in rep.margins.items()))
    return rep.passed


def _config_checks(ctx: Context) -> Dict[str, dict]:
    """Property checks on the configured problem itself."""
    cfg, p = ctx.cfg, ctx.cfg.params
    out = {}
    s = solve_equilibrium(float(cfg.schedule.at(0.0)), p, YOUNG, ctx.grid(), tol=cfg.tol)
    problems = check_state(s, p, cfg.tol)
    out["state invariants"] = {"passed": not problems, "violations": problems}
    probe = stability_probe(s, p)
    out["stability probe"] = {"passed": probe.stable, "min_margin": probe.min_margin, "worst": probe.worst}
    R0 = default_R0(p, s.grid)
    gap = abs(pressure_weak(s, R0, p) - pressure_contact_line(s, p))
    out["pressure identity"] = {"passed": gap <= 1e-3, "gap": gap}
    if not p.is_infinite:
        dec = lambda_decomposition_check(s, p)
        out["multiplier decomposition"] = {"passed": dec.holds, "remainder_scaled": dec.remainder_scaled,
                                           "bound": dec.bound}
    return out


def cmd_validate(ctx: Context) -> bool:
    results = run_all(seedless=ctx.seedless, log=ctx.log)
    summary = {r.name: {"passed": r.passed, "measured": r.measured, "thresholds": r.thresholds,
                        "runtime_limit": r.limit} for r in results}
    extra = _config_checks(ctx)
    for name, rec in extra.items():
        ctx.log(f"[{'PASS' if rec['passed'] else 'FAIL'}] config: {name}")
    ok = all(r.passed for r in results) and all(rec["passed"] for rec in extra.values())
    runtimes = {r.name: r.runtime for r in results}
    if ctx.cfg.wants("json"):
        # runtimes vary between runs, so they live in metadata rather than the summary
        wio.write_json(ctx.path("validate.json"),
                       {"check": "validate", "acceptance": summary, "config_checks": extra, "pass": ok})
    ctx.runtimes = runtimes
    return ok


HANDLERS: Dict[str, Callable[[Context], bool]] = {
    "solve": cmd_solve, "evolve": cmd_evolve, "sweep-r": cmd_sweep,
    "barriers": cmd_barriers, "validate": cmd_validate,
}


def _metadata(ctx: Context, command: str, config_path: str, ok: bool, started: str, error=None) -> dict:
    import matplotlib
    import scipy
    meta = {"command": command, "config": str(config_path), "started": started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(), "pass": ok,
            "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
            "files": sorted(ctx.written) if ctx else []}
    if ctx is not None and ctx.runtimes:
        meta["runtimes"] = ctx.runtimes
    if error is not None:
        meta["error"] = error
    return meta


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wilhelmy", description="Quasi-static Wilhelmy plate simulator.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, metavar="PATH", help="run configuration file")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides [outputs] dir)")
    ap.add_argument("--seedless", action="store_true", help="use deterministic quasi-random probe pairs")
    ap.add_argument("--quiet", action="store_true", help="suppress progress output")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    out = Path(args.out) if args.out else None
    ctx = None
    try:
        cfg = load_config(args.config)
        out = out or Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg, out, args.seedless, args.quiet)
        ok = HANDLERS[args.command](ctx)
    except Exception as exc:  # every failure becomes an error document
        err = {"type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError) and exc.line is not None:
            err["line"] = exc.line
        if not isinstance(exc, (ConfigError, OSError)):
            err["traceback"] = traceback.format_exc(limit=5)
        doc = {"check": args.command, "pass": False, "error": err}
        out = out or Path(".")
        try:
            out.mkdir(parents=True, exist_ok=True)
            wio.write_json(out / "error.json", doc)
            if ctx is not None:
                ctx.written.append("error.json")
            wio.write_json(out / "metadata.json", _metadata(ctx, args.command, args.config, False, started, err))
        except OSError:
            pass
        print(json.dumps({"error": err["type"], "message": err["message"]}), file=sys.stderr)
        return 2
    wio.write_json(out / "metadata.json", _metadata(ctx, args.command, args.config, ok, started))
    ctx.log(f"{'PASS' if ok else 'FAIL'}: wrote {', '.join(sorted(ctx.written))} to {out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
