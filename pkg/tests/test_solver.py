import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wilhelmy.energy import Profile, contact_angles, energy_hessian_dense, total_energy, weights
from wilhelmy.geometry import INFINITE, Params, annulus_volume, boundary_measure, grid_with_spacing, make_grid
from wilhelmy.solver import (ADVANCING, PINNED, RECEDING, YOUNG, AngleBC, Band, HeightBC, Pinned,
                             SolverError, StepProblem, Tolerances, check_state, flat_state,
                             minimize_step, shoot_oracle, solve_equilibrium, stability_probe)

BASE = Params(d=3, g=1.0, cos_yp=0.5, cos_yc=0.3, R=8.0)
HYST = BASE.replace(mu_plus=0.2, mu_minus=0.2)


@pytest.fixture(scope="module")
def hyst_state():
    grid = make_grid(HYST, 256, "boundary-refined")
    return minimize_step(StepProblem(flat_state(0.0, HYST, grid), 0.0, HYST))


@pytest.mark.parametrize("mu", [(0.0, 0.0), (0.3, 0.1), (0.5, 0.5)])
@pytest.mark.parametrize("F", [-1.0, 0.0, 2.5])
def test_flat_step_is_exact(mu, F):
    p = Params(d=3, cos_yp=0.0, cos_yc=0.0, mu_plus=mu[0], mu_minus=mu[1], R=6.0)
    grid = make_grid(p, 64, "boundary-refined")
    prev = flat_state(F, p, grid)
    s = minimize_step(StepProblem(prev, F, p))
    assert np.array_equal(s.h, prev.h)
    assert s.lam == 0.0 and s.regime == PINNED


@pytest.mark.parametrize("F", [-0.4, 0.0, 1.7])
def test_flat_equilibrium_for_neutral_angles(F):
    p = Params(d=3, cos_yp=0.0, cos_yc=0.0, R=5.0)
    s = solve_equilibrium(F, p, YOUNG, make_grid(p, 48))
    assert np.max(np.abs(s.h - F)) == 0.0 and s.lam == 0.0


def test_hysteretic_step_matches_oracle():
    grid = make_grid(HYST, 1024, "uniform")
    s = minimize_step(StepProblem(flat_state(0.0, HYST, grid), 0.0, HYST))
    if s.regime == PINNED:
        o = shoot_oracle(0.0, s.lam, HeightBC(s.ell), HYST, grid=grid, solve_volume=True)
    else:
        cos = HYST.band[1] if s.regime == RECEDING else HYST.band[0]
        o = shoot_oracle(0.0, s.lam, AngleBC(cos), HYST, grid=grid, solve_volume=True)
    assert abs(s.lam - o.lam) <= 1e-5
    assert np.max(np.abs(s.h - o.profile.h)) < 1e-5


def test_small_forcing_keeps_line_pinned():
    p = BASE.replace(mu_plus=0.5, mu_minus=0.45)
    grid = make_grid(p, 256, "boundary-refined")
    s0 = solve_equilibrium(0.0, p, YOUNG, grid)
    s1 = minimize_step(StepProblem(s0, 0.05, p))
    lo, hi = p.band
    assert s1.regime == PINNED
    assert s1.ell == s0.ell
    assert lo < s1.cos_plate < hi
    cp, _ = contact_angles(s1.profile, p)
    assert lo < cp < hi


def test_multiplier_leading_term():
    p = Params(d=3, g=1.0, cos_yp=0.0, cos_yc=0.4, R=12.0)
    s = solve_equilibrium(0.0, p, YOUNG, grid_with_spacing(12.0, 0.05))
    leading = -0.4 * boundary_measure(12.0, 3) / annulus_volume(12.0, 3)
    assert s.lam * 12 == pytest.approx(leading * 12, rel=0.2)


def test_truncation_independence():
    p20 = BASE.replace(R=INFINITE, R_trunc=20.0)
    p30 = BASE.replace(R=INFINITE, R_trunc=30.0)
    a = solve_equilibrium(0.3, p20, YOUNG, grid_with_spacing(20.0, 0.05))
    b = solve_equilibrium(0.3, p30, YOUNG, grid_with_spacing(30.0, 0.05))
    assert a.lam == 0.0 and b.lam == 0.0
    k = int(np.searchsorted(a.grid.r, 15.0)) + 1
    np.testing.assert_allclose(a.grid.r[:k], b.grid.r[:k], rtol=0, atol=1e-12)
    assert np.max(np.abs(a.h[:k] - b.h[:k])) <= 10 * math.exp(-15.0)


def test_oracle_flat_recovery():
    p = Params(d=3, cos_yp=0.0, cos_yc=0.0, R=6.0)
    o = shoot_oracle(0.8, 0.0, AngleBC(0.0), p, grid=make_grid(p, 64))
    assert np.max(np.abs(o.profile.h - 0.8)) < 1e-10


def test_oracle_monotone_in_multiplier():
    grid = make_grid(BASE, 128)
    a = shoot_oracle(0.0, -0.05, AngleBC(0.5), BASE, grid=grid)
    b = shoot_oracle(0.0, -0.04, AngleBC(0.5), BASE, grid=grid)
    shift = b.profile.h - a.profile.h
    assert np.all(shift > 0)
    assert np.max(np.abs(shift - 0.01 / BASE.g)) < 1e-7


def test_oracle_equivalence_for_young_angles():
    grid = make_grid(BASE, 512, "uniform")
    s = minimize_step(StepProblem(flat_state(0.0, BASE, grid), 0.0, BASE))
    o = shoot_oracle(0.0, s.lam, AngleBC(0.5), BASE, grid=grid, solve_volume=True)
    assert np.max(np.abs(s.h - o.profile.h)) <= max(1e-5, 10 * grid.max_spacing ** 2)
    assert abs(s.lam - o.lam) <= 1e-5
    assert abs(o.volume) < 1e-8


def test_state_invariants_hold(hyst_state):
    assert check_state(hyst_state, HYST) == []
    assert hyst_state.kkt_residual <= Tolerances().kkt_tol(hyst_state.lam)


def test_probe_flat_state_is_stable():
    p = Params(d=3, cos_yp=0.0, cos_yc=0.0, mu_plus=0.1, mu_minus=0.1, R=6.0)
    s = flat_state(0.0, p, make_grid(p, 64))
    rep = stability_probe(s, p)
    assert rep.min_margin >= 0.0 and rep.stable and rep.count > 0


def test_probe_solver_output(hyst_state):
    rep = stability_probe(hyst_state, HYST)
    assert rep.min_margin >= -1e-8


def test_probe_detects_perturbation(hyst_state):
    r = hyst_state.grid.r
    bump = np.exp(-((r - 4.0) / 0.7) ** 2)
    bump -= np.dot(weights(hyst_state.grid, 3).q, bump) / annulus_volume(HYST.R, 3)
    bad = type(hyst_state)(Profile(hyst_state.grid, hyst_state.h + 0.1 * bump), hyst_state.F,
                           hyst_state.lam, hyst_state.cos_plate, hyst_state.cos_container,
                           hyst_state.regime, 0, 0.0)
    rep = stability_probe(bad, HYST)
    assert rep.min_margin < -1e-6 and not rep.stable


@pytest.mark.parametrize("mode", [YOUNG, Band(0.6), Band(-0.6)])
def test_hessian_psd_at_every_iterate(mode):
    grid = make_grid(HYST, 48, "boundary-refined")
    W = weights(grid, HYST.d)
    seen = []

    def audit(h, lam, free):
        H = energy_hessian_dense(h, HYST, W)[free, free]
        seen.append(float(np.linalg.eigvalsh(H).min()))

    solve_equilibrium(0.0, HYST, mode, grid, callback=audit)
    assert seen and min(seen) >= -1e-10


def test_volume_correcting_flow_reproduces_multiplier(hyst_state):
    s, p = hyst_state, HYST
    W = weights(s.grid, p.d)
    r = s.grid.r
    V0 = np.exp(-((r - 5.0) / 0.8) ** 2)
    V0 /= np.dot(W.q, V0)
    step = 1e-4
    ep = total_energy(Profile(s.grid, s.h + step * V0), s.F, p).total
    em = total_energy(Profile(s.grid, s.h - step * V0), s.F, p).total
    assert (ep - em) / (2 * step) == pytest.approx(s.lam, abs=1e-7)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_trichotomy_regime_matches_angle(F, ell_prev):
    grid = make_grid(HYST, 96, "boundary-refined")
    s = solve_equilibrium(F, HYST, Band(ell_prev), grid)
    lo, hi = HYST.band
    tol = Tolerances().angle
    if s.regime == PINNED:
        assert s.ell == ell_prev
        assert lo - tol <= s.cos_plate <= hi + tol
    elif s.regime == RECEDING:
        assert abs(s.cos_plate - hi) <= tol and s.ell <= ell_prev
    else:
        assert s.regime == ADVANCING
        assert abs(s.cos_plate - lo) <= tol and s.ell >= ell_prev
    assert abs(s.lam) <= 10 * (1 + 1 / math.sqrt(HYST.g)) * HYST.g
    assert abs(s.cos_container - HYST.cos_yc) <= tol


def test_band_edge_tie_stays_pinned():
    p = BASE.replace(mu_plus=0.2, mu_minus=0.0)
    grid = make_grid(p, 128, "boundary-refined")
    y = solve_equilibrium(0.0, p, YOUNG, grid)
    s = solve_equilibrium(0.0, p, Band(y.ell), grid)
    assert s.regime == PINNED and s.ell == y.ell
    assert abs(s.cos_plate - p.band[1]) <= Tolerances().angle


def test_pinned_mode_fixes_contact_height():
    grid = make_grid(BASE, 64)
    s = solve_equilibrium(0.0, BASE, Pinned(0.4), grid)
    assert s.ell == 0.4 and s.regime == PINNED


def test_newton_iteration_cap_reported():
    grid = make_grid(BASE, 64)
    with pytest.raises(SolverError, match="did not converge"):
        solve_equilibrium(0.0, BASE, YOUNG, grid, tol=Tolerances(max_iters=1))


def test_invalid_params_rejected():
    with pytest.raises(ValueError, match="mu_plus"):
        solve_equilibrium(0.0, BASE.replace(mu_plus=-0.1), YOUNG, make_grid(BASE, 32))
