from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special as sp, stats

from catnet import rng as rngmod
from catnet.cir import CirParams, joint_laplace, q_density, sample_endpoint
from catnet.excursion import (ConditionedIntegralSpec, conditional_excursion_mean, conditional_integral_mean,
                              excursion_first_moment, excursion_intensity, excursion_tail,
                              integral_laplace, integral_support_grid, invert_integral_density, kappa_nu,
                              sample_clustered_path, sample_path_with_integral, stehfest_weights,
                              unconditional_integral_mean)

P11 = CirParams(1.0, 1.0)


def kappa_oracle(nu, z):
    return z * sp.ive(nu + 1, z) / sp.ive(nu, z) + nu + 1


def test_excursion_facts():
    assert excursion_tail(1.0, 1.0, 1.0) == pytest.approx(math.exp(-1))
    assert excursion_intensity(2.0, 0.5) == pytest.approx(1.0)
    assert excursion_first_moment(1.7, 0.3) == pytest.approx(1.0)
    assert conditional_excursion_mean(1.0, 1.0, 1.0, 2.5) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        conditional_excursion_mean(1.0, 2.0, 1.0, 1.0)


@pytest.mark.parametrize("nu", [-0.5, 0.0, 0.5, 2.0, 7.3])
@pytest.mark.parametrize("z", [1e-6, 0.5, 2.0, 29.9, 30.1, 100.0, 3000.0])
def test_kappa_matches_bessel_ratio(nu, z):
    assert kappa_nu(nu, z) == pytest.approx(kappa_oracle(nu, z), rel=1e-12)


def test_kappa_values():
    assert kappa_nu(0.0, 0.0) == 1.0
    # Bessel-ratio oracle; 2.395427 would be wrong in the fourth decimal
    assert kappa_nu(0.0, 2.0) == pytest.approx(2 * sp.iv(1, 2) / sp.iv(0, 2) + 1, rel=1e-13)
    assert kappa_nu(0.0, 2.0) == pytest.approx(2.3955493, abs=1e-7)
    with pytest.raises(ValueError):
        kappa_nu(-1.0, 1.0)


@given(st.floats(-0.9, 10.0), st.floats(0.0, 500.0))
def test_kappa_continuous_and_monotone(nu, z):
    assert kappa_nu(nu, z + 0.1) >= kappa_nu(nu, z) - 1e-12


def test_conditional_mean_examples():
    assert conditional_integral_mean(ConditionedIntegralSpec(P11, 1.0, 0.0, 0.0)) == pytest.approx(1 / 6)
    assert conditional_integral_mean(ConditionedIntegralSpec(P11, 1.0, 1.0, 1.0)) == pytest.approx(1.0659249, abs=1e-7)


def test_laplace_normalized_and_bridge_matches_joint():
    spec = ConditionedIntegralSpec(CirParams(0.7, 1.3), 0.9, 0.8, 1.4)
    assert integral_laplace(spec, 0.0) == pytest.approx(1.0)
    # integrating the bridge transform over y recovers the joint transform at beta = 0
    p, t, x, alpha = spec.params, spec.t, spec.x, 0.6
    lam = math.sqrt(2 * alpha)
    f = lambda y: integral_laplace(ConditionedIntegralSpec(p, t, x, y), lam) * q_density(p, t, x, y)
    val, _ = integrate.quad(f, 0, 60, weight="alg", wvar=(p.ratio - 1, 0), limit=200)
    assert val == pytest.approx(joint_laplace(p, t, x, alpha, 0.0), rel=1e-8)


def test_conditional_mean_is_transform_slope():
    spec = ConditionedIntegralSpec(CirParams(0.7, 1.3), 0.9, 0.8, 1.4)
    h = 1e-4
    # E exp(-s I) with s = lam^2/2; slope in s at 0 gives the mean
    slope = (1.0 - integral_laplace(spec, math.sqrt(2 * h))) / h
    assert slope == pytest.approx(conditional_integral_mean(spec), rel=1e-3)


def test_stehfest_weights_sum_to_zero():
    for n in (8, 14, 20):
        assert abs(stehfest_weights(n).sum()) < 1e-6 * np.abs(stehfest_weights(n)).max()
    with pytest.raises(ValueError):
        stehfest_weights(7)


def test_inversion_double_and_mp():
    spec = ConditionedIntegralSpec(P11, 1.0, 0.0, 0.0)
    w = integral_support_grid(spec, 600)
    dbl = invert_integral_density(spec, w, order=14)
    mp = invert_integral_density(spec, w, order=36, precision="mp", check_order=False)
    norm = integrate.simpson(mp.density, x=w)
    assert norm == pytest.approx(1.0, abs=1e-4)
    assert integrate.simpson(dbl.density, x=w) == pytest.approx(1.0, abs=2e-2)
    assert np.all(dbl.density >= 0)
    with pytest.raises(ValueError):
        invert_integral_density(spec, [-1.0, 1.0])
    with pytest.raises(ValueError):
        invert_integral_density(spec, w, precision="quad")


def test_path_sampler_endpoint_law_and_mean():
    p = CirParams(0.8, 1.1)
    path = sample_path_with_integral(p, 1.0, 1.0, 16, rngmod.stream(1, "path", 0), 50000)
    ref = sample_endpoint(p, 1.0, 1.0, rngmod.stream(1, "path", 1), size=50000).x_t
    assert stats.ks_2samp(path.x_t, ref).pvalue > 1e-4
    m = unconditional_integral_mean(p, 1.0, 1.0)
    se = path.integral.std() / math.sqrt(path.integral.size)
    # trapezoid on a linear-in-mean process is unbiased for the mean
    assert abs(path.integral.mean() - m) < 4 * se


def test_clustered_path_joint_law():
    p = CirParams(0.8, 1.1)
    t, x = 1.0, 1.5
    path = sample_clustered_path(p, t, x, 8, rngmod.stream(2, "clu", 0), 100000)
    # N0 is Poisson(x/(gamma t)); given N0 = n, X_t is Gamma(n + b/gamma, gamma t)
    assert abs(path.n0.mean() - x / (p.gamma * t)) < 4 * math.sqrt(x / (p.gamma * t) / path.n0.size)
    sel = path.x_t[path.n0 == 1]
    assert stats.kstest(sel, stats.gamma(1 + p.ratio, scale=p.gamma * t).cdf).pvalue > 1e-4
    m = unconditional_integral_mean(p, t, x)
    assert abs(path.integral.mean() - m) < 4 * path.integral.std() / math.sqrt(path.integral.size)
