import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasecell.geometry import (
    CATALOG,
    RotatedCube,
    direction_from_angle,
    frame_for,
    jump_datum,
    lattice_interval,
    parse_direction,
    regularised_datum,
)


def _vertex_set(box):
    return sorted(map(tuple, np.round(box.vertices(), 12)))


def test_frame_identity_for_en():
    assert np.array_equal(frame_for((0, 1)).R, np.eye(2))
    assert np.array_equal(frame_for((0, 0, 1)).R, np.eye(3))


@pytest.mark.parametrize("n", [2, 3])
def test_minus_en_gives_same_cube(n):
    e = np.zeros(n)
    e[-1] = 1
    a = RotatedCube(np.zeros(n), 1.0, frame_for(e))
    b = RotatedCube(np.zeros(n), 1.0, frame_for(-e))
    assert _vertex_set(a) == _vertex_set(b)


def test_frame_34():
    f = frame_for((3 / 5, 4 / 5))
    assert np.allclose(f.R, [[4 / 5, 3 / 5], [-3 / 5, 4 / 5]])
    assert f.M == 5
    assert np.array_equal(f.MR_int(), [[4, 3], [-3, 4]])


@pytest.mark.parametrize("n", [2, 3])
def test_catalog_frames(n):
    for num, den in CATALOG[n]:
        nu = np.asarray(num) / den
        f = frame_for(nu)
        assert f.rational and f.M > 2
        assert np.allclose(f.R.T @ f.R, np.eye(n), atol=1e-15)
        assert np.allclose(f.R[:, -1], nu, atol=1e-15)
        MR = f.M * f.R
        assert np.allclose(MR, np.rint(MR), atol=1e-12)
        # smallest integer > 2 with that property
        for m in range(3, f.M):
            assert not np.allclose(m * f.R, np.rint(m * f.R), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_opposite_directions_share_cubes(n):
    for num, den in CATALOG[n]:
        nu = np.asarray(num) / den
        a = RotatedCube(np.zeros(n), 2.0, frame_for(nu))
        b = RotatedCube(np.zeros(n), 2.0, frame_for(-nu))
        assert _vertex_set(a) == _vertex_set(b)


@given(st.floats(0, 360))
def test_off_catalog_frames_are_orthogonal(deg):
    nu = direction_from_angle(deg)
    f = frame_for(nu)
    assert np.allclose(f.R.T @ f.R, np.eye(2), atol=1e-14)
    # directions within 1e-9 of a catalog entry snap to it
    assert np.allclose(f.R[:, -1], nu, atol=1e-9)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_3d_frames_are_orthogonal(v):
    f = frame_for(v)
    nu = np.asarray(v) / np.linalg.norm(v)
    assert np.allclose(f.R.T @ f.R, np.eye(3), atol=1e-12)
    assert np.allclose(f.R[:, -1], nu, atol=1e-12)


def test_frame_rejects_bad_input():
    for bad in ((0, 0), (1, 2, 3, 4), (np.nan, 1)):
        with pytest.raises(ValueError):
            frame_for(bad)


def test_parse_direction():
    assert np.allclose(parse_direction("3,4"), [3, 4])
    assert np.allclose(parse_direction("90deg"), [0, 1], atol=1e-15)
    assert frame_for(parse_direction("3,4")).M == 5


def test_rotated_cube_round_trip():
    f = frame_for((3 / 5, 4 / 5))
    Q = RotatedCube((1.0, -2.0), 3.0, f)
    z = np.random.default_rng(0).uniform(-1.5, 1.5, (20, 2))
    assert np.allclose(Q.to_local(Q.to_physical(z)), z)
    assert Q.area == pytest.approx(3.0)
    assert Q.rho == 3.0
    assert Q.scaled(2.0).same_as(RotatedCube((2.0, -4.0), 6.0, f))


def test_jump_datum():
    x, nu = np.array([0.2, 0.3]), np.array([0.6, 0.8])
    assert jump_datum(x, nu, x) == 1
    assert jump_datum(x, nu, x - nu) == 0
    assert jump_datum(x, nu, x + nu) == 1


def test_regularised_datum():
    x, nu = np.array([0.2, 0.3]), np.array([0.6, 0.8])
    eps = 0.1
    assert regularised_datum(x, nu, eps, x + 2 * eps * nu) == 1.0
    assert regularised_datum(x, nu, eps, x - 2 * eps * nu) == 0.0
    assert regularised_datum(x, nu, eps, x) == 0.5
    y = np.random.default_rng(0).uniform(-3, 3, (50, 2))
    far = np.abs((y - x) @ nu) > eps
    assert np.array_equal(regularised_datum(x, nu, eps, y)[far], jump_datum(x, nu, y)[far])


def test_lattice_interval_axis():
    L = lattice_interval(-1, 1, (0, 1))
    assert L.M == 3 and L.c == 1
    lo, hi = L.local_bounds()
    assert lo.tolist() == [-3, -3] and hi.tolist() == [3, 3]


def test_lattice_interval_34():
    L = lattice_interval(0, 1, (3 / 5, 4 / 5))
    assert L.M == 5 and L.c == 0.5
    assert L.centre().tolist() == [2.0, -1.5]
    assert L.lattice_vector([1]).tolist() == [4, -3]
    # translating the interval moves the box by the lattice vector
    T = L.translated([2])
    assert np.array_equal(T.centre() - L.centre(), L.lattice_vector([2]))


def test_lattice_interval_3d():
    L = lattice_interval((0, 0), (2, 1), (2 / 3, 2 / 3, 1 / 3))
    assert L.measure == 2
    assert L.box().n == 3


def test_lattice_interval_off_catalog():
    with pytest.raises(ValueError, match="direct cube"):
        lattice_interval(0, 1, direction_from_angle(30))
