import math

import numpy as np
import pytest

from wilhelmy import io as wio
from wilhelmy.config import ConfigError, parse_config
from wilhelmy.evolution import TRACE_COLUMNS, ForcingSchedule, run
from wilhelmy.geometry import INFINITE, Params, make_grid
from wilhelmy.solver import YOUNG, solve_equilibrium


def test_minimal_config_defaults():
    cfg = parse_config("d = 3\ng = 1\ncos_yp = 0.5\ncos_yc = 0.3\nR = 8\n")
    assert cfg.params == Params(d=3, g=1.0, cos_yp=0.5, cos_yc=0.3, R=8.0)
    assert cfg.N == 256 and cfg.grading == "uniform"
    assert cfg.schedule.knots == ForcingSchedule.preset("cycle").knots
    assert cfg.delta == pytest.approx(0.01)
    assert cfg.artifacts == ("csv", "json", "png")


def test_sections_and_comments():
    text = """
    # wetting data
    [params]
    cos_yp = 0.4   # plate
    R = inf
    R_trunc = 20
    [grid]
    N = 64
    grading = boundary-refined
    [schedule]
    knots = 0:0, 1:0.5, 2:0
    delta = 0.05
    [outputs]
    artifacts = csv, json
    """
    cfg = parse_config(text)
    assert math.isinf(cfg.params.R) and cfg.params.R_trunc == 20.0
    assert cfg.N == 64 and cfg.grading == "boundary-refined"
    assert cfg.schedule.knots == ((0.0, 0.0), (1.0, 0.5), (2.0, 0.0))
    assert cfg.delta == 0.05
    assert cfg.wants("csv") and not cfg.wants("png")


def test_invalid_parameter_message():
    with pytest.raises(ConfigError, match="mu_plus must be nonnegative"):
        parse_config("mu_plus = -0.1\n")


def test_duplicate_key_names_both_lines():
    with pytest.raises(ConfigError) as err:
        parse_config("[params]\ng = 1\nR = 4\ng = 2\n")
    assert "duplicate key 'g'" in str(err.value)
    assert "lines 2 and 4" in str(err.value)
    assert err.value.line == 4


@pytest.mark.parametrize("text, line, fragment", [
    ("g = 1\n[grid]\nM = 4\n", 3, "unknown key 'M'"),
    ("[nope]\n", 1, "unknown section"),
    ("g = 1\nR 4\n", 2, "key = value"),
    ("\n\ng = one\n", 3, "bad value for 'g'"),
    ("[grid]\ngrading = log\n", 2, "grading"),
    ("[solve]\nmode = pinned\n", 2, "needs ell"),
    ("[barriers]\na = 1\nA = 2\n", 2, "all of a, A, b, B"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line
    assert fragment in str(err.value)
    assert str(err.value).startswith(f"line {line}: ")


def test_knots_and_preset_exclusive():
    with pytest.raises(ConfigError, match="either knots or preset"):
        parse_config("[schedule]\npreset = ramp\nknots = 0:0, 1:1\n")


def test_profile_csv_round_trip_is_exact(tmp_path):
    p = Params(d=3, g=1.0, cos_yp=0.5, cos_yc=0.3, R=8.0)
    s = solve_equilibrium(0.1, p, YOUNG, make_grid(p, 64, "boundary-refined"))
    path = wio.write_profile_csv(tmp_path / "profile.csv", s.profile)
    back = wio.read_profile_csv(path)
    assert np.array_equal(back.r, s.profile.r)
    assert np.array_equal(back.h, s.profile.h)


def test_trace_csv_round_trip(tmp_path):
    p = Params(d=3, g=1.0, cos_yp=0.5, cos_yc=0.3, mu_plus=0.2, mu_minus=0.2, R=8.0)
    grid = make_grid(p, 48, "boundary-refined")
    sch = ForcingSchedule.preset("ramp")
    tr = run(sch, 0.1, p, solve_equilibrium(0.0, p, YOUNG, grid))
    path = wio.write_trace_csv(tmp_path / "trace.csv", tr)
    assert path.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    cols = wio.read_trace_csv(path)
    assert np.array_equal(cols["t"], np.array(tr.t))
    assert np.array_equal(cols["ell"], tr.column("ell"))
    assert list(cols["regime"]) == list(tr.column("regime"))


def test_jsonable_handles_special_values():
    doc = wio.jsonable({"R": INFINITE, "x": np.float64(0.5), "n": np.int64(3), "ok": np.bool_(True),
                        "v": np.array([1.0, -math.inf]), "nan": math.nan})
    assert doc == {"R": "inf", "x": 0.5, "n": 3, "ok": True, "v": [1.0, "-inf"], "nan": "nan"}


def test_fmt_is_round_trip():
    for x in (0.1, 1 / 3, -2.5e-17, 123456789.123):
        assert float(wio.fmt(x)) == x


def test_profile_reader_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        wio.read_profile_csv(path)
