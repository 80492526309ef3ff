from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasecell.potentials import (
    DoubleWell,
    Profile,
    compute_Cu,
    compute_cp,
    eval_profile,
    optimal_profile_1d,
    profile_energy_1d,
)

QUARTIC = DoubleWell()
# exact value of int_{-1}^{1} W(u) + u'^2 for the smoothstep profile, from a symbolic integration
CU_QUARTIC = Fraction(3246, 5005)
# 3 * 2^(-2/3) * int_0^1 (t(1-t))^(4/3), evaluated symbolically
CP_QUARTIC_P3 = 0.18211298310364997


def test_potential_zeros_and_values():
    assert QUARTIC(0.0) == 0.0 and QUARTIC(1.0) == 0.0
    assert QUARTIC(0.5) == pytest.approx(1 / 16)
    qw = DoubleWell("quadratic-wells")
    assert qw(0.25) == pytest.approx(1 / 16)
    assert qw(0.75) == pytest.approx(1 / 16)


def test_custom_polynomial():
    W = DoubleWell("custom-polynomial", (1.0, 0.5))
    assert W(0.5) == pytest.approx(1 / 16 * 1.25)
    assert not W.is_symmetric()
    assert QUARTIC.is_symmetric()


@pytest.mark.parametrize("kind,coef", [("quartic", (-1.0,)), ("custom-polynomial", (-1.0,)), ("nope", (1.0,))])
def test_potential_rejects_invalid(kind, coef):
    with pytest.raises(ValueError):
        DoubleWell(kind, coef)


@pytest.mark.parametrize("W", [QUARTIC, DoubleWell("quadratic-wells", (2.0,)), DoubleWell("custom-polynomial", (1.0, 0.5, 0.25))])
def test_derivative_matches_finite_differences(W):
    t = np.linspace(-0.3, 1.3, 37)
    t = t[np.abs(t - 0.5) > 1e-3]
    d = 1e-6
    fd = (W(t + d) - W(t - d)) / (2 * d)
    assert np.allclose(W.derivative(t), fd, rtol=1e-6, atol=1e-8)


def test_profile_examples():
    assert eval_profile(-2.0) == 0.0
    assert eval_profile(0.0) == 0.5
    assert eval_profile(0.5) == pytest.approx(0.84375)
    assert eval_profile(2.0) == 1.0


@given(st.floats(-5, 5))
def test_profile_range_and_symmetry(t):
    u = eval_profile(t)
    assert 0.0 <= u <= 1.0
    assert u + eval_profile(-t) == pytest.approx(1.0)


def test_cp_quartic_closed_form():
    assert compute_cp(QUARTIC, 2.0) == pytest.approx(1 / 3, abs=1e-12)


def test_cp_quadratic_wells():
    # 2 * int_0^1 min(t, 1-t) = 1/2
    assert compute_cp(DoubleWell("quadratic-wells"), 2.0) == pytest.approx(0.5, abs=1e-12)


def test_cp_scaling():
    assert compute_cp(QUARTIC.scaled(4.0), 2.0) == pytest.approx(2 / 3, rel=1e-10)


def test_cp_p3():
    assert compute_cp(QUARTIC, 3.0) == pytest.approx(CP_QUARTIC_P3, rel=1e-8)


@given(st.floats(0.1, 10.0), st.floats(1.2, 4.0))
def test_cp_scaling_law(lam, p):
    a = compute_cp(QUARTIC.scaled(lam), p)
    b = compute_cp(QUARTIC, p)
    assert a == pytest.approx(lam ** ((p - 1) / p) * b, rel=1e-8)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_cp_quadrature_doubling(p):
    assert abs(compute_cp(QUARTIC, p, 256) - compute_cp(QUARTIC, p, 512)) < 1e-8


def test_cp_rejects_bad_arguments():
    with pytest.raises(ValueError):
        compute_cp(QUARTIC, 1.0)
    with pytest.raises(ValueError):
        compute_cp(QUARTIC, 2.0, 10)


def test_cu_exact_and_above_cp():
    Cu = compute_Cu(QUARTIC)
    assert Cu == pytest.approx(float(CU_QUARTIC), abs=1e-13)
    assert Cu > compute_cp(QUARTIC, 2.0)


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_cu_change_of_variables(lam):
    # u(t / lam): the potential part scales by lam, the gradient part by 1 / lam
    pot = compute_Cu(QUARTIC, Profile(lam), 2.0) - compute_Cu(DoubleWell("quartic", (1e-300,)), Profile(lam), 2.0)
    grad = compute_Cu(DoubleWell("quartic", (1e-300,)), Profile(lam), 2.0)
    pot1 = compute_Cu(QUARTIC) - compute_Cu(DoubleWell("quartic", (1e-300,)))
    grad1 = compute_Cu(DoubleWell("quartic", (1e-300,)))
    assert pot == pytest.approx(lam * pot1, rel=1e-12)
    assert grad == pytest.approx(grad1 / lam, rel=1e-12)


def test_cu_integrand_vanishes_at_ends():
    u = Profile()
    for t in (-1.0, 1.0):
        assert QUARTIC(u(t)) + u.derivative(t) ** 2 == 0.0


def test_profile_energy_gradient():
    rng = np.random.default_rng(0)
    v = np.clip(Profile()(np.linspace(-3, 3, 41)) + rng.uniform(-0.1, 0.1, 41), 0, 1)
    h = 6 / 40
    E, g = profile_energy_1d(QUARTIC, 2.0, v, h)
    for i in (3, 17, 30):
        d = 1e-6
        vp, vm = v.copy(), v.copy()
        vp[i] += d
        vm[i] -= d
        fd = (profile_energy_1d(QUARTIC, 2.0, vp, h)[0] - profile_energy_1d(QUARTIC, 2.0, vm, h)[0]) / (2 * d)
        assert fd == pytest.approx(g[i], rel=1e-6)


def test_optimal_profile_1d():
    res = optimal_profile_1d(QUARTIC, 2.0, 512)
    assert 1 / 3 <= res.cost <= 1 / 3 * 1.02
    assert res.values[0] == 0.0 and res.values[-1] == 1.0
    assert res.converged
    assert np.all(np.diff(res.values) >= -1e-12)


def test_optimal_profile_1d_validation():
    with pytest.raises(ValueError):
        optimal_profile_1d(QUARTIC, 2.0, 64)
    with pytest.raises(ValueError):
        optimal_profile_1d(QUARTIC, 2.0, 512, half_width=2.0)
