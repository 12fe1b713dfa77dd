from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special as sp

from catnet.special import log_bessel_i, log_series, log_series_scalar


@pytest.mark.parametrize("nu", [-0.7, -0.2, 0.0, 0.5, 1.0, 3.3, 20.0])
@pytest.mark.parametrize("z", [1e-8, 0.01, 1.0, 7.5, 50.0, 700.0, 5000.0])
def test_log_bessel_matches_scipy(nu, z):
    ref = math.log(sp.ive(nu, z)) + z
    assert log_bessel_i(nu, z) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_log_series_vectorised_matches_scalar():
    u = np.array([0.0, 1e-6, 0.3, 4.0, 90.0, 380.0, 2000.0])
    for c in (0.3, 1.0, 2.7):
        vec = log_series(u, c)
        ref = [log_series_scalar(float(v), c) for v in u]
        np.testing.assert_allclose(vec, ref, rtol=1e-13)


def test_log_series_at_zero_is_reciprocal_gamma():
    for c in (0.3, 1.0, 4.5):
        assert log_series_scalar(0.0, c) == pytest.approx(-math.lgamma(c), abs=1e-15)


@given(st.floats(0.0, 30.0), st.floats(0.05, 10.0))
def test_series_matches_direct_sum(u, c):
    j = np.arange(400)
    terms = j * math.log(u) - sp.gammaln(j + 1) - sp.gammaln(j + c) if u > 0 else None
    ref = -math.lgamma(c) if u == 0 else float(sp.logsumexp(terms))
    assert log_series_scalar(u, c) == pytest.approx(ref, rel=1e-13, abs=1e-13)


@given(st.floats(0.01, 300.0), st.floats(0.05, 10.0))
def test_series_ratio_bound(u, c):
    # each term of F(u, c) is (j + c) times the term of F(u, c + 1)
    assert log_series_scalar(u, c) - log_series_scalar(u, c + 1) >= math.log(c) - 1e-12
