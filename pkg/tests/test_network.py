from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from catnet.network import (BranchingNetwork, ScalarField, apply_generator, check_coefficients,
                            hypercyclic_preset, in_state_space, localize, oscillation_scan, partition,
                            validate_network)


def chain():
    # 2 catalyses 1, 3 catalyses 2
    return BranchingNetwork(3, [(2, 1), (3, 2)], [0.5, 1.0, 2.0], [0.3, 0.6, 0.9])


def test_fields():
    f = ScalarField.affine(1.0, [2.0, -1.0], 2)
    assert f(np.array([1.0, 3.0])) == pytest.approx(0.0)
    g = ScalarField.expr("1 + x1*exp(-x2)", 2)
    assert g(np.array([2.0, 0.0])) == pytest.approx(3.0)
    np.testing.assert_allclose(g(np.zeros((4, 2))), np.ones(4))
    assert ScalarField.from_spec(2.5, 3)(np.zeros(3)) == 2.5
    for bad in ("__import__('os')", "x3", "x1.real", "x1 +"):
        with pytest.raises(ValueError):
            ScalarField.expr(bad, 2)
    with pytest.raises(ValueError):
        ScalarField.affine(0.0, [1.0], 2)


def test_validation_clauses():
    net = BranchingNetwork(3, [(1, 1), (2, 3), (1, 3), (4, 2)], [1] * 3, [1] * 3)
    rep = validate_network(net)
    clauses = {v.clause for v in rep.violations}
    assert clauses == {"self_loop", "multiple_catalysts", "vertex_range"}
    assert not rep.valid
    assert validate_network(chain()).valid


@given(st.permutations([(2, 1), (1, 1), (3, 1), (2, 3), (5, 2)]))
def test_validation_order_insensitive(edges):
    ref = validate_network(BranchingNetwork(3, [(2, 1), (1, 1), (3, 1), (2, 3), (5, 2)], [1] * 3, [1] * 3))
    assert validate_network(BranchingNetwork(3, list(edges), [1] * 3, [1] * 3)).violations == ref.violations


def test_state_space():
    net = chain()
    assert in_state_space(net, [0.0, 1.0, 0.0])
    assert not in_state_space(net, [0.0, 0.0, 1.0])
    assert not in_state_space(net, [-1.0, 1.0, 1.0])


def test_coefficients():
    net = BranchingNetwork(2, [(2, 1)], [1.0, {"kind": "expr", "expr": "x1 - 1"}], [0.5, {"kind": "expr", "expr": "x2"}])
    rep = check_coefficients(net, [[0.0, 0.0], [2.0, 1.0]])
    assert {v.clause for v in rep.violations} == {"gamma_positive", "inward_drift"}
    assert check_coefficients(hypercyclic_preset(2, [1, 1]), [[0.0, 0.0], [3.0, 1.0]]).ok
    with pytest.raises(ValueError):
        check_coefficients(net, np.empty((0, 2)))


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_generator_matches_formula(x1, x2, x3):
    net = chain()
    x = np.array([x1, x2, x3])
    f = lambda y: y[0] ** 2 * y[1] + y[2] ** 3 + y[0] * y[2]
    g, b = np.array([0.5, 1.0, 2.0]), np.array([0.3, 0.6, 0.9])
    grad = np.array([2 * x1 * x2 + x3, x1 ** 2, 3 * x3 ** 2 + x1])
    hess = np.array([2 * x2, 0.0, 6 * x3])
    diff = g * x * np.array([x2, x3, 1.0])
    ref = float(diff @ hess + b @ grad)
    assert apply_generator(net, f, x) == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_partition_and_localize():
    net = chain()
    x0 = [1.0, 0.0, 2.0]
    Z, ZC, N1, N2 = partition(net, x0)
    assert Z == {1} and ZC == {1} and N1 == {0} and N2 == {2}
    lm = localize(net, x0)
    assert lm.delta == pytest.approx(0.6)
    np.testing.assert_allclose(lm.gamma0, [0.5 * 1.0, 1.0 * 2.0, 2.0])
    assert lm.floored == ()
    assert lm.M0 == pytest.approx(max(2.0, 1 / 0.5, 0.9, 1 / 0.6, 1 / 0.9))
    assert lm.blocks() == [("mixed", 1, (0,)), ("cir", 2, ())]
    assert lm.mu_exponents[0] == 0.0


def test_localize_floor_and_empty_zero_set():
    net = BranchingNetwork(3, [(2, 1), (3, 2)], [0.5, 1.0, 2.0], [0.01, 0.6, 0.05])
    lm = localize(net, [1.0, 0.0, 2.0])
    # N1 = {0} keeps its drift; coordinate 2 is raised to delta/2
    assert lm.b0[0] == pytest.approx(0.01) and lm.b0[2] == pytest.approx(0.3) and lm.floored == (2,)
    free = localize(hypercyclic_preset(2, [1, 1]), [2.0, 2.0])
    assert free.delta is None and free.floored == () and math.isinf(free.M0)
    floored = localize(hypercyclic_preset(2, [1, 1]), [2.0, 2.0], empty_floor=0.4)
    np.testing.assert_allclose(floored.b0, [0.2, 0.2])
    with pytest.raises(ValueError):
        localize(net, [0.0, 0.0, 1.0])


def test_oscillation():
    net = BranchingNetwork(2, [(2, 1)], [{"kind": "expr", "expr": "1 + x1"}, 1.0], [1.0, 1.0])
    rep = oscillation_scan(net, ([0.5, 0.5], [1.5, 1.5]), 0.1, 0.15)
    assert rep.max_oscillation == pytest.approx(0.2, abs=0.01)
    assert rep.flags[:, 0].all() and not rep.flags[:, 1].any()
    with pytest.raises(ValueError):
        oscillation_scan(net, ([1.0, 1.0], [1.0, 2.0]), 0.1, 0.1)


def test_hypercycle_roundtrip():
    net = hypercyclic_preset(3, [1.0, 2.0, 3.0])
    assert net.edges == [(2, 1), (3, 2), (1, 3)]
    again = BranchingNetwork(**{k: v for k, v in net.to_dict().items()})
    np.testing.assert_allclose(again.b_at(np.ones(3)), [0.0, 1.0, 2.0])
