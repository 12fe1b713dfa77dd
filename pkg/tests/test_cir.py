from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special as sp, stats

from catnet import rng as rngmod
from catnet.cir import (CirParams, analytic_inequalities, closed_moments, joint_laplace, laplace_endpoint,
                        log_q_density, negative_moment, q_density, sample_decomposition, sample_endpoint,
                        tail_bound)

P11 = CirParams(1.0, 1.0)


def test_spec_examples():
    assert q_density(P11, 1.0, 0.0, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert q_density(P11, 1.0, 1.0, 1.0) == pytest.approx(math.exp(-2) * sp.iv(0, 2), rel=1e-13)
    assert q_density(P11, 1.0, 1.0, 1.0) == pytest.approx(0.308508, abs=1e-6)


@pytest.mark.parametrize("a,t,x,y", [(0.3, 0.5, 1.0, 2.0), (2.5, 2.0, 0.7, 0.1), (1.0, 1.0, 3.0, 0.0),
                                     (1.7, 0.1, 0.4, 0.5)])
def test_density_matches_bessel_form(a, t, x, y):
    p = CirParams(a, 1.0)
    s = t
    if y == 0 or x == 0:
        ref = s ** -a * math.exp(-(x + y) / s) / math.gamma(a)
    else:
        z = 2 * math.sqrt(x * y) / s
        nu = a - 1
        ref = s ** -1 * math.exp(-(x + y) / s + z) * sp.ive(nu, z) * (x * y) ** (-nu / 2)
    assert q_density(p, t, x, y) == pytest.approx(ref, rel=1e-12)


@given(st.floats(0.05, 4.0), st.floats(0.05, 3.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_density_symmetric(a, t, x, y):
    p = CirParams(a, 1.0)
    assert q_density(p, t, x, y) == pytest.approx(q_density(p, t, y, x), rel=1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_log_density_consistent(a, y):
    p = CirParams(a, 0.7)
    assert math.exp(log_q_density(p, 0.8, 1.3, y)) == pytest.approx(q_density(p, 0.8, 1.3, y), rel=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
@pytest.mark.parametrize("x", [0.0, 0.4, 2.0])
def test_derivatives_match_finite_differences(order, x):
    p = CirParams(1.3, 0.8)
    h = 1e-3
    f = lambda u: q_density(p, 0.9, u, 0.6, deriv_order=order - 1)
    if x == 0.0:
        fd = (-3 * f(0.0) + 4 * f(h) - f(2 * h)) / (2 * h)
        tol = 1e-4
    else:
        fd = (f(x + h) - f(x - h)) / (2 * h)
        tol = 1e-5
    assert q_density(p, 0.9, x, 0.6, deriv_order=order) == pytest.approx(fd, rel=tol, abs=tol)


def test_normalization_against_reference_measure():
    for a in (0.4, 2.0):
        p = CirParams(a, 1.0)
        val, _ = integrate.quad(lambda y: q_density(p, 1.0, 0.8, y), 0, 80, weight="alg", wvar=(a - 1, 0))
        assert val == pytest.approx(1.0, abs=1e-9)


def test_laplace_closed_form():
    p = CirParams(0.6, 1.5)
    t, x, lam = 0.7, 1.2, 0.9
    val, _ = integrate.quad(lambda y: math.exp(-lam * y) * q_density(p, t, x, y), 0, 80,
                            weight="alg", wvar=(p.ratio - 1, 0))
    assert laplace_endpoint(p, t, x, lam) == pytest.approx(val, rel=1e-9)
    assert laplace_endpoint(p, t, 0.0, lam) == pytest.approx((1 + lam * p.gamma * t) ** -p.ratio)


def test_joint_laplace_reduces_to_endpoint():
    p = CirParams(0.9, 1.1)
    assert joint_laplace(p, 0.8, 1.0, 0.0, 0.7) == pytest.approx(laplace_endpoint(p, 0.8, 1.0, 0.7), rel=1e-13)


def test_joint_laplace_integral_mean():
    # d/dalpha at 0 gives -E I_t = -(x t + b t^2 / 2)
    p = CirParams(0.9, 1.1)
    t, x, h = 0.8, 1.0, 1e-6
    d = (joint_laplace(p, t, x, h, 0.0) - joint_laplace(p, t, x, -0.0, 0.0)) / h
    assert -d == pytest.approx(x * t + p.b * t * t / 2, rel=1e-4)


def test_closed_moments():
    p = CirParams(0.6, 1.5)
    m, v = closed_moments(p, 2.0, 1.0)
    assert m == pytest.approx(1.0 + 0.6 * 2.0)
    assert v == pytest.approx(2 * 1.5 * 2.0 * 1.0 + 0.6 * 1.5 * 4.0)


def test_sampler_moments_and_conditional_gamma():
    p = CirParams(0.5, 1.0)
    rng = rngmod.stream(3, "test", 0)
    smp = sample_endpoint(p, 1.0, 2.0, rng, size=200000)
    m, v = closed_moments(p, 1.0, 2.0)
    assert abs(smp.x_t.mean() - m) < 4 * math.sqrt(v / smp.x_t.size)
    sel = smp.x_t[smp.n0 == 2]
    assert stats.kstest(sel, stats.gamma(2 + p.ratio, scale=1.0).cdf).pvalue > 1e-4


def test_sampler_seed_reproducible():
    p = CirParams(1.0, 1.0)
    a = sample_endpoint(p, 1.0, 1.0, rngmod.stream(5, "x", 0), size=100).x_t
    b = sample_endpoint(p, 1.0, 1.0, rngmod.stream(5, "x", 0), size=100).x_t
    np.testing.assert_array_equal(a, b)


def test_sampler_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_endpoint(P11, 1.0, -1.0, rngmod.stream(1, "x"), size=3)
    with pytest.raises(ValueError):
        sample_endpoint(P11, 0.0, 1.0, rngmod.stream(1, "x"), size=3)


def test_decomposition_law():
    p = CirParams(0.8, 1.2)
    rng = rngmod.stream(4, "dec", 0)
    dec = sample_decomposition(p, 1.0, 1.5, 0.4, rng, size=100000)
    ref = sample_endpoint(p, 1.0, 1.5, rngmod.stream(4, "dec", 1), size=100000)
    assert stats.ks_2samp(dec.x_t, ref.x_t).pvalue > 1e-4
    # n0 is Poisson with the full mean x/(gamma t)
    assert abs(dec.n0.mean() - 1.5 / 1.2) < 4 * math.sqrt(1.5 / 1.2 / dec.n0.size)


def test_decomposition_excursions_exponential():
    p = CirParams(0.8, 1.2)
    dec = sample_decomposition(p, 1.0, 30.0, 0.0, rngmod.stream(4, "dec", 2), size=2000, keep_excursions=True)
    e = np.concatenate(dec.excursions)
    assert stats.kstest(e, stats.expon(scale=1.2).cdf).pvalue > 1e-4
    np.testing.assert_allclose([x.sum() for x in dec.excursions], dec.excursion_sum)


def test_tail_bound_edge_cases():
    assert tail_bound(P11, 1.0, 2.0, 2.0, "upper") == 1.0
    assert tail_bound(P11, 1.0, 0.0, 3.0, "upper") == 1.0
    assert tail_bound(P11, 1.0, 2.0, 0.0, "lower") == 0.0
    with pytest.raises(ValueError):
        tail_bound(P11, 1.0, 2.0, 1.0, "middle")


@given(st.floats(0.1, 5.0), st.floats(0.1, 10.0), st.floats(0.1, 2.0))
def test_tail_bound_in_unit_interval(z, w, t):
    side = "upper" if w > z else "lower"
    v = tail_bound(P11, t, z, w, side)
    assert 0.0 <= v <= 1.0


def test_negative_moment_at_zero_start():
    # X_t ~ Gamma(a, gamma t) from 0: E X^-p = (gamma t)^-p Gamma(a-p)/Gamma(a)
    p = CirParams(1.5, 1.0)
    val = negative_moment(p, 2.0, 0.0, 0.6)
    assert val == pytest.approx(2.0 ** -0.6 * math.gamma(0.9) / math.gamma(1.5), rel=1e-8)
    with pytest.raises(ValueError):
        negative_moment(p, 1.0, 1.0, 1.5)


def test_analytic_inequalities_finite():
    rep = analytic_inequalities(P11)
    assert rep.ok
    assert rep.constants["d2_weighted"] == pytest.approx(2.0, rel=1e-3)
    with pytest.raises(ValueError):
        analytic_inequalities(P11, {"t": []})


def test_params_validation():
    with pytest.raises(ValueError):
        CirParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        CirParams(1.0, 0.0)
