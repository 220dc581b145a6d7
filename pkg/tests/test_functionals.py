import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levystein.functionals import (CenteringError, ConstantWeight, CosineFunctional, CosineWeight, RationalWeight,
                                   ShiftedCosineWeight, UnsupportedOracleError, centered_eval, check_H2,
                                   closed_form_gn, conditional_mean, default_probes, inner_floor, make_functional,
                                   scaled_windows, trig_expectation, verify_bounds)
from levystein.levy import LevyModel, ParameterError
from levystein.asymptotics import estimate_gn_mc


def cosine(u, m=0, d=1, weight=None, lam=0.0, v=None):
    freqs = np.full((m + 1, d), u) if np.ndim(u) == 0 else u
    return CosineFunctional(weight or ConstantWeight(1.0), freqs, lam, v)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.5, 2.0])
def test_conditional_mean_unit_frequency(alpha):
    g = cosine(1.0, weight=CosineWeight((1.0,), 1.0))
    x = np.array([[0.3]])
    for n in (1, 10, 1000):
        assert conditional_mean(g, LevyModel.stable(alpha), n, x) == pytest.approx(math.cos(0.3) * math.exp(-1))


def test_sine_term_has_zero_mean():
    base = cosine(0.7)
    skew = cosine(0.7, lam=0.5, v=[1.3])
    model = LevyModel.stable(1.5)
    assert conditional_mean(skew, model, 8, [0.0]) == conditional_mean(base, model, 8, [0.0])


def test_mc_conditional_mean_agrees():
    g = cosine(0.8, m=1, weight=CosineWeight((1.0,), 1.0))
    model = LevyModel.stable(1.5)
    x = np.array([[0.4]])
    with pytest.warns(UserWarning, match="Monte Carlo centring"):
        mc = conditional_mean(g, model, 16, x, n_inner=100000)
    y = scaled_windows(model, 16, 100000, 0, slots=2)
    se = g.eval(np.broadcast_to(x, (100000, 1)), y).std() / math.sqrt(100000)
    assert abs(mc - conditional_mean(g, model, 16, x)) < 3 * se


def test_mc_centering_floor_enforced():
    g = cosine(1.0)
    assert inner_floor(100, 0.1) == 1000000
    with pytest.raises(CenteringError):
        conditional_mean(g, LevyModel.stable(1.5), 100, [0.0], n_inner=1000, tol=0.1)


def test_non_oracle_functional_needs_inner_samples():
    from levystein.functionals import Bounds, CallableFunctional
    g = CallableFunctional(lambda x, y: np.tanh(y[..., 0, 0]) ** 2, 0, 1, Bounds(1, 0, 0), True)
    with pytest.raises(CenteringError):
        conditional_mean(g, LevyModel.stable(1.5), 4, [0.0])


def test_centered_constant_is_zero():
    g = cosine(0.0, weight=ConstantWeight(2.5))
    y = np.random.default_rng(0).standard_cauchy((10, 1, 1))
    assert np.all(centered_eval(g, LevyModel.stable(1.5), 4, np.zeros((10, 1)), y) == 0.0)


def test_centered_mean_zero_over_fresh_windows():
    g = cosine(0.9, m=1, weight=CosineWeight((1.0,), 1.0))
    model = LevyModel.stable(1.5)
    y = scaled_windows(model, 32, 100000, 7, slots=2)
    x = np.full((100000, 1), 0.5)
    f = centered_eval(g, model, 32, x, y)
    assert abs(f.mean()) < 3 * f.std() / math.sqrt(f.size)


def test_hand_expansion_value():
    g = CosineFunctional(CosineWeight((2.0,), 1.5), [[0.5], [1.5]], lam=0.25, v=[2.0])
    x = np.array([0.1])
    y = np.array([[0.3], [-0.7]])
    hand = 1.5 * math.cos(0.2) * (math.cos(0.15) * math.cos(-1.05) + 0.25 * math.sin(0.6))
    assert g.eval(x, y) == pytest.approx(hand, rel=1e-14)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("u", [0.3, 1.0, 1.7])
def test_closed_form_m0(alpha, u):
    w = CosineWeight((1.0,), 1.0)
    g = cosine(u, weight=w)
    x = np.array([0.4])
    expect = w(x) ** 2 * ((1 + math.exp(-(2 * u) ** alpha)) / 2 - math.exp(-2 * u**alpha))
    assert closed_form_gn(g, LevyModel.stable(alpha), 3, x) == pytest.approx(expect, rel=1e-13, abs=1e-15)


def test_closed_form_constant_functional_is_zero():
    assert closed_form_gn(cosine(0.0, m=2, weight=ConstantWeight(3.0)), LevyModel.stable(1.5), 5, [0.0]) == 0.0


def test_closed_form_independent_of_n():
    g = cosine(0.6, m=2, d=2, weight=RationalWeight(1.0), lam=0.3, v=[1.0, -0.5])
    model = LevyModel.stable(1.3, dim=2)
    x = default_probes(2)
    assert np.array_equal(closed_form_gn(g, model, 7, x), closed_form_gn(g, model, 4096, x))


def test_closed_form_rejects_wide_windows():
    g = cosine(0.5, m=5)
    with pytest.raises(UnsupportedOracleError):
        closed_form_gn(g, LevyModel.stable(1.5), 4, [0.0])


def test_trig_expectation_single_factor():
    # E cos(u Y) for standard stable Y
    assert trig_expectation([("cos", [[1.3]])], 1.5) == pytest.approx(math.exp(-1.3**1.5))
    # E cos(aY1) sin(bY2) = 0 and E sin(aY)^2 = (1 - exp(-(2a)^alpha)) / 2
    assert trig_expectation([("cos", [[0.4], [0.0]]), ("sin", [[0.0], [0.9]])], 1.5) == pytest.approx(0.0, abs=1e-16)
    assert trig_expectation([("sin", [[0.8]]), ("sin", [[0.8]])], 1.2) == pytest.approx((1 - math.exp(-1.6**1.2)) / 2)


def test_closed_form_matches_mc_m1():
    g = cosine(0.9, m=1, weight=ShiftedCosineWeight((1.0,), 0.5, 1.0), lam=0.4, v=[0.7])
    model = LevyModel.stable(1.5)
    est, se = estimate_gn_mc(g, model, 32, [0.3], 400000, master_seed=2)
    assert abs(est - closed_form_gn(g, model, 32, [0.3])) < 3 * se


@settings(max_examples=30, deadline=None)
@given(u=st.floats(-2, 2), lam=st.floats(-1, 1), theta=st.floats(-2, 2))
def test_symmetric_flag_means_even_in_y(u, lam, theta):
    g = CosineFunctional(CosineWeight((theta,), 1.0), [[u], [u / 2]], lam, [1.0])
    y = np.random.default_rng(1).standard_cauchy((20, 2, 1))
    x = np.random.default_rng(2).normal(size=(20, 1))
    if lam == 0.0:
        assert g.symmetric_in_y
        assert np.array_equal(g.eval(x, y), g.eval(x, -y))
    else:
        assert not g.symmetric_in_y


@pytest.mark.parametrize("weight", [ConstantWeight(2.0), CosineWeight((1.5,), 0.7),
                                    ShiftedCosineWeight((1.0,), 0.5, 2.0), RationalWeight(1.3)])
def test_bounds_never_violated(weight):
    g = CosineFunctional(weight, [[0.7], [1.1]], 0.3, [0.5])
    for key, (seen, cert) in verify_bounds(g, 200000, master_seed=3).items():
        assert seen <= cert * (1 + 1e-12), key


def test_rational_weight_derivative_bounds_are_sharp():
    w = RationalWeight(1.0)
    x = np.linspace(-3, 3, 200001)[:, None]
    assert np.max(np.abs(w.grad(x))) == pytest.approx(w.sup_grad, rel=1e-6)
    assert np.max(np.abs(w.hess(x))) == pytest.approx(w.sup_hess, rel=1e-6)


def test_make_functional_shapes():
    g = make_functional({"m": 1, "frequencies": [0.1, 0.2], "weight": {"kind": "cos", "theta": 2.0}}, 2)
    assert g.frequencies.shape == (2, 2) and g.window == 1
    with pytest.raises(ParameterError):
        make_functional({"m": 1, "frequencies": [0.1, 0.2, 0.3]}, 1)
    with pytest.raises(ParameterError):
        make_functional({"weight": {"kind": "nope"}}, 1)


def test_default_probes_grid():
    assert default_probes(1).shape == (9, 1)
    p2 = default_probes(2)
    assert p2.shape == (81, 2) and p2.min() == -2 and p2.max() == 2


def test_h2_symmetric_consistent():
    g = cosine(0.8, m=1, weight=CosineWeight((1.0,), 1.0))
    assert check_H2(g, LevyModel.stable(1.5), 16, 100000, master_seed=1).consistent


def test_h2_asymmetric_detected():
    g = cosine(0.8, weight=ConstantWeight(1.0), lam=0.5, v=[1.0])
    rep = check_H2(g, LevyModel.stable(1.5), 16, 1000000, probes=[[0.0]], master_seed=2)
    assert not rep.consistent


def test_h2_y_independent_is_exactly_zero():
    g = cosine(0.0, weight=CosineWeight((1.0,), 1.0))
    rep = check_H2(g, LevyModel.stable(1.5), 16, 1000, master_seed=1)
    assert np.all(rep.estimate == 0.0)


def test_h2_refuses_small_alpha():
    with pytest.raises(ParameterError):
        check_H2(cosine(1.0), LevyModel.stable(1.0), 16, 100)
