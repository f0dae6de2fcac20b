import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wilhelmy.geometry import (INFINITE, MIN_NODES, Params, RadialGrid, annulus_volume,
                               boundary_measure, grid_with_spacing, make_grid, sphere_constant,
                               validate_params)


def test_valid_params_have_no_violations():
    p = Params(d=3, g=1, cos_yp=0.5, mu_plus=0.2, mu_minus=0.2, cos_yc=0.3, R=4)
    assert validate_params(p) == []


def test_band_edge_outside_unit_interval():
    p = Params(cos_yp=0.5, mu_minus=0.6)
    msgs = validate_params(p)
    assert len(msgs) == 1
    assert "cos_yp + mu_minus = 1.1" in msgs[0] and "(-1,1)" in msgs[0]


def test_container_cosine_on_boundary_rejected():
    msgs = validate_params(Params(cos_yc=-1.0))
    assert any("|cos_yc| = 1" in m for m in msgs)


@pytest.mark.parametrize("changes, fragment", [
    ({"g": 0.0}, "g = 0"),
    ({"R": 1.0}, "R = 1"),
    ({"d": 4}, "d = 4"),
    ({"mu_plus": -0.1}, "mu_plus must be nonnegative"),
    ({"R": INFINITE, "R_trunc": 0.5}, "R_trunc"),
])
def test_each_violation_is_listed(changes, fragment):
    msgs = validate_params(Params().replace(**changes))
    assert any(fragment in m for m in msgs), msgs


def test_infinite_container_is_valid():
    p = Params(R=INFINITE, R_trunc=12)
    assert validate_params(p) == []
    assert p.outer_radius == 12


@pytest.mark.parametrize("r, d, expected", [(2, 3, 4 * math.pi), (5, 2, 2.0), (1, 3, 2 * math.pi)])
def test_boundary_measure_values(r, d, expected):
    assert boundary_measure(r, d) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("R, d, expected", [(2, 3, 3 * math.pi), (3, 2, 4.0), (10, 3, 99 * math.pi)])
def test_annulus_volume_values(R, d, expected):
    assert annulus_volume(R, d) == pytest.approx(expected, rel=1e-15)


def test_unsupported_dimension():
    with pytest.raises(ValueError):
        boundary_measure(1.0, 4)
    with pytest.raises(ValueError):
        annulus_volume(2.0, 1)


@given(st.floats(0.01, 100), st.sampled_from([2, 3]))
def test_boundary_measure_scales_like_power(r, d):
    assert boundary_measure(r, d) * r ** -(d - 2) == pytest.approx(sphere_constant(d), rel=1e-13)


@given(st.floats(1.0001, 200), st.sampled_from([2, 3]))
def test_annulus_volume_is_integral_of_boundary_measure(R, d):
    val, _ = quad(lambda r: boundary_measure(r, d), 1.0, R, epsabs=0, epsrel=1e-13)
    assert annulus_volume(R, d) == pytest.approx(val, rel=1e-12)


def test_grid_below_minimum_rejected():
    with pytest.raises(ValueError, match="16"):
        make_grid(Params(R=2.0), 3)
    with pytest.raises(ValueError):
        make_grid(Params(R=2.0), MIN_NODES - 1)


def test_uniform_grid_nodes():
    g = make_grid(Params(R=4.0), 16, "uniform")
    np.testing.assert_allclose(g.r, np.linspace(1, 4, 16), rtol=0, atol=1e-15)
    assert g.r[0] == 1.0 and g.r[-1] == 4.0
    assert g.dr == pytest.approx(0.2)


def test_refined_grid_on_truncated_domain():
    g = make_grid(Params(R=INFINITE, R_trunc=12), 64, "boundary-refined")
    assert g.r[0] == 1.0 and g.r[-1] == 12.0
    dr = np.diff(g.r)
    assert dr[0] == pytest.approx(dr.min()) and dr[-1] == pytest.approx(dr.min())
    assert dr[len(dr) // 2] > 5 * dr[0]


@settings(max_examples=50)
@given(st.integers(16, 400), st.floats(1.5, 100), st.sampled_from(["uniform", "boundary-refined"]))
def test_make_grid_invariants(N, R, grading):
    g = make_grid(Params(R=R), N, grading)
    assert g.n == N
    assert g.r[0] == 1.0 and g.r[-1] == R
    assert np.all(np.diff(g.r) > 0)


def test_grid_rejects_bad_nodes():
    with pytest.raises(ValueError):
        RadialGrid(np.r_[1.0, np.linspace(2, 3, 15), 2.5])
    with pytest.raises(ValueError):
        RadialGrid(np.linspace(1.1, 3, 20))


def test_grid_is_immutable_and_hashable():
    g = make_grid(Params(R=4.0), 32)
    with pytest.raises(ValueError):
        g.r[3] = 0.0
    assert g == make_grid(Params(R=4.0), 32)
    assert hash(g) == hash(make_grid(Params(R=4.0), 32))


def test_grids_with_same_spacing_share_inner_nodes():
    a, b = grid_with_spacing(8.0, 0.05), grid_with_spacing(16.0, 0.05)
    np.testing.assert_array_equal(a.r[:50], b.r[:50])
