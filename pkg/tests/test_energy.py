import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wilhelmy.energy import (Profile, ProfileError, contact_angles, dissipation, el_residual,
                             energy_gradient, energy_hessian_dense, total_energy, volume_functional,
                             weights)
from wilhelmy.geometry import INFINITE, Params, annulus_volume, make_grid
from wilhelmy.solver import YOUNG, AngleBC, shoot_oracle, solve_equilibrium

P_REF = Params(d=3, g=1.0, cos_yp=0.5, cos_yc=0.3, R=8.0)


def flat(p, N, F, grading="uniform"):
    g = make_grid(p, N, grading)
    return Profile(g, np.full(g.n, float(F)))


def test_profile_shape_and_finiteness():
    g = make_grid(Params(R=4.0), 16)
    with pytest.raises(ProfileError):
        Profile(g, np.zeros(15))
    with pytest.raises(ProfileError):
        Profile(g, np.r_[np.zeros(15), np.nan])


def test_profile_ceiling():
    p = Params(R=4.0, g=4.0)
    g = make_grid(p, 16)
    Profile(g, np.full(16, 24.0)).check_ceiling(p)
    with pytest.raises(ProfileError, match="ceiling"):
        Profile(g, np.full(16, 26.0)).check_ceiling(p)


def test_flat_energy_components():
    p = Params(d=3, cos_yp=0.5, cos_yc=0.0, R=2.0)
    e = total_energy(flat(p, 16, 1.0), 1.0, p)
    assert e.free_surface == pytest.approx(3 * math.pi, rel=1e-14)
    assert e.plate_term == pytest.approx(-math.pi, rel=1e-14)
    assert e.container_term == 0.0
    assert e.gravity == 0.0
    assert e.total == pytest.approx(2 * math.pi, rel=1e-14)


@pytest.mark.parametrize("F", [-1.3, 0.0, 0.7])
def test_flat_energy_infinite_container(F):
    p = Params(d=3, cos_yp=0.5, cos_yc=0.2, R=INFINITE, R_trunc=15.0)
    e = total_energy(flat(p, 64, F, "boundary-refined"), F, p)
    assert e.free_surface == 0.0 and e.container_term == 0.0 and e.gravity == 0.0
    assert e.total == pytest.approx(-0.5 * 2 * math.pi * F, abs=1e-14)


def test_energy_matches_oracle_after_extrapolation():
    # second-order quadrature: Richardson on N and 2N cells removes the leading error
    energies = []
    for N in (257, 513):
        grid = make_grid(P_REF, N)
        s = solve_equilibrium(0.0, P_REF, YOUNG, grid)
        energies.append(total_energy(s.profile, 0.0, P_REF).total)
    extrapolated = (4 * energies[1] - energies[0]) / 3
    o = shoot_oracle(0.0, s.lam, AngleBC(P_REF.cos_yp), P_REF, grid=make_grid(P_REF, 513), solve_volume=True)
    assert abs(extrapolated - o.energy) < 1e-6
    assert abs(energies[1] - o.energy) < 1e-3


def test_energy_total_is_sum_of_parts():
    p = P_REF
    g = make_grid(p, 40)
    h = np.sin(g.r)
    e = total_energy(Profile(g, h), 0.3, p)
    assert e.total == e.free_surface + e.plate_term + e.container_term + e.gravity


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(-1, 1), st.integers(0, 10_000))
def test_energy_shift_covariance(c, F, seed):
    p = P_REF
    g = make_grid(p, 32, "boundary-refined")
    h = F + 0.3 * np.random.default_rng(seed).standard_normal(g.n)
    e0 = total_energy(Profile(g, h), F, p)
    e1 = total_energy(Profile(g, h + c), F + c, p)
    sigma = 2 * math.pi
    assert e1.plate_term - e0.plate_term == pytest.approx(-p.cos_yp * sigma * c, abs=1e-12)
    assert e1.free_surface == pytest.approx(e0.free_surface, rel=1e-14, abs=1e-12)
    assert e1.container_term == pytest.approx(e0.container_term, abs=1e-12)
    assert e1.gravity == pytest.approx(e0.gravity, rel=1e-12, abs=1e-12)


def test_volume_examples():
    p = Params(d=3, R=2.0)
    assert volume_functional(flat(p, 16, 0.4), 0.4, p) == 0.0
    assert volume_functional(flat(p, 16, 1.5), 0.5, p) == pytest.approx(3 * math.pi, rel=1e-14)
    p2 = Params(d=2, R=3.0)
    g = make_grid(p2, 17)
    F = 0.25
    assert volume_functional(Profile(g, F + (g.r - 2)), F, p2) == pytest.approx(0.0, abs=1e-14)


def test_volume_undefined_for_infinite_container():
    p = Params(R=INFINITE, R_trunc=10.0)
    with pytest.raises(ValueError):
        volume_functional(flat(p, 16, 0.0), 0.0, p)


@settings(max_examples=40)
@given(st.floats(-3, 3), st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_volume_offset_is_exact(c, seed, d):
    p = Params(d=d, R=5.0)
    g = make_grid(p, 33)
    h = np.random.default_rng(seed).standard_normal(g.n)
    diff = volume_functional(Profile(g, h + c), 0.0, p) - volume_functional(Profile(g, h), 0.0, p)
    assert diff == pytest.approx(c * annulus_volume(5.0, d), rel=1e-12, abs=1e-12)


def test_dissipation_examples():
    p = Params(d=3, mu_plus=0.1, mu_minus=0.2)
    assert dissipation(0.0, 0.5, p) == pytest.approx(0.1 * math.pi, rel=1e-15)
    assert dissipation(0.3, 0.3, p) == 0.0
    q = Params(d=3, mu_plus=0.1, mu_minus=0.1)
    lhs = dissipation(0.0, 1.0, q) + dissipation(1.0, 0.5, q)
    assert lhs == pytest.approx(0.3 * math.pi)
    assert dissipation(0.0, 0.5, q) == pytest.approx(0.1 * math.pi)
    assert lhs >= dissipation(0.0, 0.5, q)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1), st.floats(0, 1))
def test_dissipation_triangle_inequality(a, b, c, mp, mm):
    p = Params(d=3, mu_plus=mp, mu_minus=mm)
    assert dissipation(a, b, p) + dissipation(b, c, p) >= dissipation(a, c, p) - 1e-12


def test_contact_angle_of_unit_slope():
    p = Params(R=4.0)
    g = make_grid(p, 32, "boundary-refined")
    cp, cc = contact_angles(Profile(g, 3.0 - g.r), p)
    assert cp == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert cc == pytest.approx(-1 / math.sqrt(2), rel=1e-12)


def test_flat_contact_angles_are_zero():
    p = Params(R=4.0)
    assert contact_angles(flat(p, 16, 2.0), p) == (0.0, 0.0)


def test_container_angle_of_stable_state():
    grid = make_grid(P_REF, 512, "boundary-refined")
    s = solve_equilibrium(0.0, P_REF, YOUNG, grid)
    cp, cc = contact_angles(s.profile, P_REF)
    assert abs(cc - 0.3) <= 1e-4
    assert abs(cp - 0.5) <= 1e-4


def test_el_residual_flat_is_zero():
    for grading in ("uniform", "boundary-refined"):
        p = Params(R=6.0)
        prof = flat(p, 40, 0.7, grading)
        assert np.all(el_residual(prof, 0.7, 0.0, p) == 0.0)
        assert np.all(el_residual(prof, 0.7, 0.0, p, pointwise=True) == 0.0)


@pytest.mark.parametrize("pointwise", [False, True])
def test_el_residual_linear_profile(pointwise):
    # h = F + eps r, d = 3: H = (1/r) eps / sqrt(1 + eps^2), residual = -H + g eps r - lam
    eps, F = 0.1, 0.0
    p = Params(d=3, g=1.0, R=3.0)
    g = make_grid(p, 21)
    res = el_residual(Profile(g, F + eps * g.r), F, 0.0, p, pointwise=pointwise)
    i = int(np.argmin(np.abs(g.r - 2.0))) - 1
    expected = -(1 / 2.0) * eps / math.sqrt(1 + eps ** 2) + eps * 2.0
    assert expected == pytest.approx(0.150248, abs=1e-6)
    assert res[i] == pytest.approx(expected, rel=1e-12)


def test_el_residual_of_solver_output():
    grid = make_grid(P_REF, 256, "boundary-refined")
    s = solve_equilibrium(0.0, P_REF, YOUNG, grid)
    assert np.max(np.abs(el_residual(s.profile, s.F, s.lam, P_REF))) < 1e-6 * (1 + abs(s.lam))
    # the centered stencil is a different discretization; it agrees to O(dr^2)
    assert np.max(np.abs(el_residual(s.profile, s.F, s.lam, P_REF, pointwise=True))) < 1e-2


def test_gradient_matches_finite_differences():
    p = P_REF
    g = make_grid(p, 24, "boundary-refined")
    h = 0.2 * np.cos(g.r)
    W = weights(g, p.d)
    grad = energy_gradient(h, 0.1, p, W)
    for i in (0, 5, 11, 23):
        e = np.zeros(g.n)
        e[i] = 1e-6
        fd = (total_energy(Profile(g, h + e), 0.1, p).total
              - total_energy(Profile(g, h - e), 0.1, p).total) / 2e-6
        assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_hessian_matches_gradient_differences():
    p = P_REF
    g = make_grid(p, 20)
    h = 0.3 * np.sin(2 * g.r)
    W = weights(g, p.d)
    H = energy_hessian_dense(h, p, W)
    v = np.linspace(-1, 1, g.n)
    fd = (energy_gradient(h + 1e-6 * v, 0.0, p, W) - energy_gradient(h - 1e-6 * v, 0.0, p, W)) / 2e-6
    np.testing.assert_allclose(H @ v, fd, rtol=1e-6, atol=1e-8)


def test_coercivity_sanity():
    p = P_REF.replace(mu_plus=0.2, mu_minus=0.2)
    grid = make_grid(p, 256, "boundary-refined")
    s = solve_equilibrium(0.0, p, YOUNG, grid)
    C = 10 * (1 + 1 / math.sqrt(p.g)) * 2 * math.pi
    assert total_energy(s.profile, 0.0, p).total <= annulus_volume(p.R, p.d) + C * 0.2
