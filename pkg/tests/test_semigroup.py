from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from catnet import rng as rngmod
from catnet.cir import CirParams, laplace_endpoint, q_density
from catnet.semigroup import (Factor, McEstimate, MixedModel, evaluate_Pt, exp_linear_weights,
                              gaussian_kernel_G, ibp_derivative, mixed_density, mixed_density_derivative,
                              reference_Pt, registered_functions, resolvent_horizon, resolvent_Rlambda)
from catnet.semigroup import TestFunction as ProductFunction

MODEL = MixedModel((0.3,), (0.8,), CirParams(1.2, 0.9))
FNS = registered_functions(1)


@given(st.floats(-2, 2), st.floats(0.01, 3), st.floats(0, 2), st.floats(-1, 1), st.floats(-1, 1))
def test_factor_gaussian_mean(mu, var, a, c, e):
    f = Factor(poly=(0.5, -0.3, 0.2), a=a, c=c, e=e)
    sd = math.sqrt(var)
    val, _ = integrate.quad(lambda z: f(z) * math.exp(-(z - mu) ** 2 / (2 * var)) / (sd * math.sqrt(2 * math.pi)),
                            mu - 14 * sd, mu + 14 * sd, limit=200)
    assert f.gaussian_mean(mu, var) == pytest.approx(val, rel=1e-7, abs=1e-10)


def test_factor_derivatives():
    f = Factor(poly=(1.0, 0.5, -0.2), a=0.7, c=0.3, e=0.4)
    h = 1e-5
    for z in (-1.0, 0.0, 1.5):
        assert f.d1(z) == pytest.approx((f(z + h) - f(z - h)) / (2 * h), rel=1e-6, abs=1e-8)
        assert f.d2(z) == pytest.approx((f.d1(z + h) - f.d1(z - h)) / (2 * h), rel=1e-6, abs=1e-8)
    with pytest.raises(ValueError):
        Factor(a=-1.0)


def test_kernel_closed_form_vs_quadrature():
    I, X = np.array([0.3, 1.2]), np.array([0.5, 2.0])
    f = FNS["gauss_exp"]
    closed = gaussian_kernel_G(MODEL, 1.0, [0.2], f, I, X)
    quad = gaussian_kernel_G(MODEL, 1.0, [0.2], lambda y: f(y), I, X, n_quad=40)
    np.testing.assert_allclose(closed, quad, rtol=1e-6)


@pytest.mark.parametrize("name", ["exp_cat", "gauss_exp", "gauss", "one"])
def test_reference_vs_monte_carlo(name):
    f = FNS[name]
    x = np.array([0.1, 0.7])
    ref = reference_Pt(MODEL, 0.8, x, f)
    est = evaluate_Pt(MODEL, 0.8, x, f, 40000, rngmod.stream(11, "pt", 0), K=32)
    assert abs(est.value - ref) <= 4 * est.std_error + abs(est.extra["integral_bias_proxy"]) + 1e-12


def test_reference_catalyst_only_is_cir_laplace():
    x = np.array([0.4, 1.3])
    assert reference_Pt(MODEL, 0.6, x, FNS["exp_cat"]) == pytest.approx(laplace_endpoint(MODEL.cat, 0.6, 1.3, 1.0))


def test_generator_is_time_derivative():
    x = np.array([0.2, 1.1])
    f = FNS["gauss_exp"]
    h = 1e-4
    slope = (reference_Pt(MODEL, 2 * h, x, f) - reference_Pt(MODEL, h, x, f)) / h
    assert slope == pytest.approx(MODEL.apply_generator(f, x), rel=2e-3, abs=2e-3)


def test_density_routes_agree_and_marginal():
    x, y = np.array([0.1, 0.9]), np.array([0.4, 1.2])
    four = mixed_density(MODEL, 1.0, x, y, method="fourier")
    inv = mixed_density(MODEL, 1.0, x, y, method="inversion")
    assert four == pytest.approx(inv, rel=1e-3)
    # integrating out the Gaussian coordinate leaves the catalyst density
    val, _ = integrate.quad(lambda u: mixed_density(MODEL, 1.0, x, np.array([u, 1.2])), -8, 8, limit=200)
    assert val == pytest.approx(q_density(MODEL.cat, 1.0, 0.9, 1.2), rel=1e-5)


def test_density_duality():
    x, y = np.array([0.1, 0.9]), np.array([0.4, 1.2])
    assert mixed_density(MODEL, 0.7, x, y) == pytest.approx(mixed_density(MODEL.dual(), 0.7, y, x), rel=1e-10)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_density_derivatives(order):
    x, y = np.array([0.1, 0.9]), np.array([0.4, 1.2])
    h = 1e-3

    def g(u):
        return mixed_density_derivative(MODEL, 1.0, np.array([u, 0.9]), y, order=order - 1)

    fd = (g(0.1 + h) - g(0.1 - h)) / (2 * h)
    assert mixed_density_derivative(MODEL, 1.0, x, y, order=order) == pytest.approx(fd, rel=1e-5, abs=1e-7)
    with pytest.raises(ValueError):
        mixed_density_derivative(MODEL, 1.0, x, y, axis=1, order=1)


def test_ibp_catalyst_coordinate():
    res = ibp_derivative(MODEL, 1.0, [0.0, 2.0], FNS["cat"], 50000, rngmod.stream(3, "ibp", 0))
    assert res.bias_bound == 0.0
    assert abs(res.main.value - 1.0) < 4 * res.main.std_error
    with pytest.raises(ValueError):
        ibp_derivative(MODEL, 1.0, [0.0, 0.0], FNS["cat"], 10, rngmod.stream(3, "ibp", 0))


def test_ibp_exp_cat_closed_form():
    t, z2 = 0.5, 0.5
    ref = -laplace_endpoint(MODEL.cat, t, z2, 1.0) / (1 + MODEL.cat.gamma * t)
    res = ibp_derivative(MODEL, t, [0.0, z2], FNS["exp_cat"], 50000, rngmod.stream(3, "ibp", 1))
    assert abs(res.main.value - ref) < 4 * res.main.std_error


def test_resolvent_against_quadrature():
    lam, x = 1.5, np.array([0.0, 1.0])
    f = FNS["exp_cat"]
    ref, _ = integrate.quad(lambda t: math.exp(-lam * t) * reference_Pt(MODEL, t, x, f) if t > 0 else f(x),
                            0, 40, limit=200)
    est = resolvent_Rlambda(MODEL, lam, x, f, 1e-4, rngmod.stream(5, "res", 0), n_paths=20000)
    assert abs(est.value - ref) < 4 * est.std_error + 1e-3
    with pytest.raises(ValueError):
        resolvent_Rlambda(MODEL, lam, x, FNS["cat"], 1e-3, rngmod.stream(5, "res", 0))


def test_exp_linear_weights_exact_for_linear():
    t = np.linspace(0, 3, 31)
    w = exp_linear_weights(t, 2.0)
    g = 1.0 + 2.0 * t
    exact = (1 - math.exp(-6)) / 2 + 2 * (1 / 4 - math.exp(-6) * (3 / 2 + 1 / 4))
    assert w @ g == pytest.approx(exact, rel=1e-12)
    assert resolvent_horizon(1.0, 1.0, 1e-3) == pytest.approx(math.log(1e3))


def test_mc_estimate_roundtrip():
    est = McEstimate.from_samples([1.0, 2.0, 3.0], seed=4, K=8)
    assert est.value == 2.0 and est.to_dict()["K"] == 8 and est.n == 3


def test_model_validation():
    with pytest.raises(ValueError):
        MixedModel((0.1,), (0.0,), CirParams(1, 1))
    with pytest.raises(ValueError):
        reference_Pt(MODEL, 1.0, [0.0, -1.0], FNS["one"])
    assert ProductFunction((Factor(), Factor(e=1.0))).gaussian_free
