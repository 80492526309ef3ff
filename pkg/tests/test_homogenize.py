import csv

import pytest

from phasecell.geometry import direction_from_angle
from phasecell.homogenize import (
    ResourceError,
    anisotropy_scan,
    check_tiling_subadditivity,
    hom_bracket,
    homogenize_direction,
    relative_spread,
)
from phasecell.integrands import make_integrand

HOM = make_integrand({})
LAMINATE = make_integrand({"variant": "laminate", "values": [2, 1], "axis": 1})
CHECKER = make_integrand({"variant": "checkerboard"})
CP = 1 / 3


def test_homogeneous_sweep(tmp_path):
    run = homogenize_direction(HOM, (0, 1), x_list=((0, 0), (0.3, 0.7)), r_list=(4, 8, 16), jobs=4)
    assert run.x_spread < 0.02
    assert run.trend[0] > run.trend[1] > run.trend[2] > CP
    # first-order extrapolation in 1 / r removes the wall excess
    assert run.extrapolated == pytest.approx(CP, rel=0.02)
    run.write_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["nu_x", "nu_y", "x", "r", "density", "converged"] and len(rows) == 7


def test_laminate_channel_direction():
    t = anisotropy_scan(LAMINATE, [(1, 0), (0, 1)], 8)
    d1, d2 = t.densities
    assert d2 < d1 - 0.05 * CP
    # layers stacked along the other axis swap the cheap direction
    other = make_integrand({"variant": "laminate", "values": [2, 1], "axis": 0})
    e1, e2 = anisotropy_scan(other, [(1, 0), (0, 1)], 8).densities
    assert e1 == pytest.approx(d2, rel=1e-12)
    # the reflected frame flips the difference stencil: equal up to discretisation
    assert e2 == pytest.approx(d1, rel=1e-2)


def test_isotropy_homogeneous():
    dirs = [direction_from_angle(22.5 * k) for k in range(8)]
    t = anisotropy_scan(HOM, dirs, 4, resolution=16, jobs=4)
    assert t.ratio <= 1.05
    assert len(t.polar()) == 8


def test_checkerboard_square_symmetry():
    # quarter turns about a sub-square centre preserve the pattern
    c = ((0.25 / 8, 0.25 / 8),)
    a = homogenize_direction(CHECKER, (3 / 5, 4 / 5), x_list=c, r_list=(8,)).f_hom_est
    b = homogenize_direction(CHECKER, (-4 / 5, 3 / 5), x_list=c, r_list=(8,)).f_hom_est
    assert abs(a - b) / b <= 0.03
    lo, hi = 0.5 * CP * 0.95, 2.0 * CP * 1.08
    assert lo <= a <= hi


def test_tiling_laminate():
    rep = check_tiling_subadditivity(LAMINATE, (0, 1), 4, 12, direct=False)
    assert rep.admissible and rep.holds
    assert rep.spacing == 6 and rep.tiles == 1


def test_tiling_single_tile():
    rep = check_tiling_subadditivity(HOM, (0, 1), 4, 4, direct=False)
    assert rep.filler_energy == pytest.approx(0.0, abs=1e-12)
    assert rep.competitor_density == pytest.approx(rep.m_r / 4, rel=1e-12)


@pytest.mark.xfail(reason="tile spacing exceeds r, so the datum filler costs about 2 c_p per unit length; the competitor is 57% above the direct solve", strict=True)
def test_tiling_homogeneous_close_to_direct():
    rep = check_tiling_subadditivity(HOM, (0, 1), 4, 12)
    assert rep.competitor_density <= 1.05 * rep.direct_density


def test_tiling_rejects_off_catalog():
    with pytest.raises(ValueError):
        check_tiling_subadditivity(HOM, direction_from_angle(30), 4, 12)


def test_resource_and_input_checks():
    with pytest.raises(ResourceError):
        homogenize_direction(HOM, (0, 1), r_list=(64,))
    with pytest.raises(ValueError):
        homogenize_direction(HOM, (0, 1), r_list=(4,), resolution=8)
    with pytest.raises(ValueError):
        homogenize_direction(HOM, (0, 1), r_list=(8, 4))


def test_helpers():
    assert relative_spread([1.0]) == 0.0
    assert relative_spread([1.0, 1.1]) == pytest.approx(0.1)
    lo, hi = hom_bracket(CHECKER)
    assert lo == pytest.approx(0.5 * CP * 0.95) and hi == pytest.approx(2.0 * CP * 1.08)
