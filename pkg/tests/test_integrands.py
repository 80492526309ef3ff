import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasecell.integrands import (
    CoefficientField,
    RandomCheckerboard,
    cell_hash,
    check_growth,
    make_integrand,
    shift_random,
)

LAMINATE = {"variant": "laminate", "values": [2, 1]}


def test_homogeneous_integrand():
    I = make_integrand({"potential": "quartic", "p": 2})
    assert I.homogeneous and I.c1 == 1.0 and I.c2 == 1.0
    assert I((0.3, 0.1), 0.0, (0.0, 0.0)) == 0.0
    assert I((0.3, 0.1), 0.5, (0.0, 0.0)) == pytest.approx(1 / 16)
    assert I((0.0, 0.0), 0.5, (1.0, 2.0)) == pytest.approx(1 / 16 + 5)


def test_laminate_values_and_constants():
    I = make_integrand(LAMINATE)
    assert (I.c1, I.c2) == (1.0, 2.0)
    assert I((0.25, 0.0), 0.5, (1.0, 0.0)) == pytest.approx(2.125)
    assert I((0.75, 0.0), 0.5, (1.0, 0.0)) == pytest.approx(1.0625)
    # varies only along the first axis by default
    assert I((0.25, 0.9), 0.5, (1.0, 0.0)) == pytest.approx(2.125)
    ok, worst = check_growth(I)
    assert ok and worst == 0.0


def test_laminate_axis():
    I = make_integrand(dict(LAMINATE, axis=1))
    assert I.coefficient_at(np.array([0.75, 0.25])) == 2.0
    assert I.coefficient_at(np.array([0.25, 0.75])) == 1.0


def test_checkerboard_pattern():
    I = make_integrand({"variant": "checkerboard"})
    a = I.coefficient_at(np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75], [1.25, 1.25]]))
    assert a.tolist() == [0.5, 2.0, 2.0, 0.5, 0.5]
    assert (I.c1, I.c2) == (0.5, 2.0)


def test_random_checkerboard_zero_at_wells():
    I = make_integrand({"variant": "random", "values": [0.5, 2.0], "seed": 42})
    y = np.random.default_rng(0).uniform(-50, 50, (100, 2))
    for u in (0.0, 1.0):
        assert np.all(I(y, u, np.zeros(2)) == 0.0)


@pytest.mark.parametrize(
    "spec",
    [{"p": 1.0}, {"c1": 0.0}, {"c1": 2.0, "c2": 1.0}, {"variant": "laminate", "values": [1, -1]}, {"variant": "bogus"}],
)
def test_make_integrand_rejects(spec):
    with pytest.raises(ValueError):
        make_integrand(spec)


@pytest.mark.parametrize("spec", [{}, LAMINATE, {"variant": "checkerboard"}, {"variant": "random", "seed": 3}, {"variant": "constant", "value": 1.7}, {"p": 3.0}])
def test_growth_bounds(spec):
    ok, _ = check_growth(make_integrand(spec))
    assert ok


def test_partial_derivatives():
    I = make_integrand(dict(LAMINATE, p=3.0))
    rng = np.random.default_rng(1)
    y = rng.uniform(-3, 3, (20, 2))
    u = rng.uniform(0, 1, 20)
    xi = rng.normal(size=(20, 2))
    d = 1e-6
    fd_u = (I(y, u + d, xi) - I(y, u - d, xi)) / (2 * d)
    assert np.allclose(I.du(y, u, xi), fd_u, rtol=1e-6)
    for k in range(2):
        e = np.zeros(2)
        e[k] = d
        fd = (I(y, u, xi + e) - I(y, u, xi - e)) / (2 * d)
        assert np.allclose(I.dxi(y, u, xi)[:, k], fd, rtol=1e-5)


def test_oscillating_scales_the_coefficient():
    I = make_integrand(LAMINATE)
    Ie = I.oscillating(0.1)
    y = np.array([[0.025, 0.0], [0.075, 0.0]])
    assert Ie.coefficient_at(y).tolist() == [2.0, 1.0]
    H = make_integrand({})
    assert H.oscillating(0.1) is H


def test_shift_random_identity_and_inverse():
    rf = RandomCheckerboard(7)
    cells = np.random.default_rng(0).integers(-1000, 1000, (100, 2))
    assert np.array_equal(shift_random(rf, (0, 0)).cell_values(cells), rf.cell_values(cells))
    back = shift_random(shift_random(rf, (3, -5)), (-3, 5))
    assert np.array_equal(back.cell_values(cells), rf.cell_values(cells))


@given(st.integers(0, 2**63), st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=2), st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=2))
def test_random_shift_is_translation(seed, z, cell):
    rf = RandomCheckerboard(seed)
    cell = np.array([cell])
    assert rf.shifted(z).cell_values(cell)[0] == rf.cell_values(cell + np.array(z))[0]


def test_cell_hash_is_stateless_and_spread():
    cells = np.stack(np.meshgrid(np.arange(-20, 20), np.arange(-20, 20), indexing="ij"), -1).reshape(-1, 2)
    h1 = cell_hash(5, cells)
    assert np.array_equal(h1, cell_hash(5, cells[::-1])[::-1])
    assert len(np.unique(h1)) == len(cells)
    frac = np.mean(RandomCheckerboard(5).cell_values(cells) == 2.0)
    assert 0.4 < frac < 0.6


def test_coefficient_field_validation():
    with pytest.raises(ValueError):
        CoefficientField("periodic-checkerboard", (1.0, 2.0, 3.0), subdivisions=2)
    with pytest.raises(ValueError):
        CoefficientField("nope", (1.0,))


def test_to_dict_roundtrip_fields():
    d = make_integrand(LAMINATE).to_dict()
    assert d["c1"] == 1.0 and d["c2"] == 2.0 and d["coefficient"]["kind"] == "periodic-laminate"
