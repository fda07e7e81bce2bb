import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import TOPOLOGIES, loop_cost, loop_kernel, random_cost, random_kernel
from tnmot.factor_model import (
    BudgetExceeded,
    CostFactor,
    CostModel,
    KernelFactor,
    KernelModel,
    PositivityError,
    assemble_dense_cost,
    assemble_dense_kernel,
    chain_cost,
    gibbs_factors,
    sqdist_cost,
)


def test_index_tuples_validated():
    with pytest.raises(ValueError):
        CostFactor((1, 0), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        CostFactor((), np.zeros(()))
    with pytest.raises(ValueError):
        CostModel((2, 2), [CostFactor((0, 2), np.zeros((2, 2)))])


def test_cost_rejects_negative_and_uncovered_modes():
    with pytest.raises(ValueError):
        CostFactor((0, 1), -np.ones((2, 2)))
    with pytest.raises(ValueError, match="appear in no factor"):
        CostModel((2, 2, 2), [CostFactor((0, 1), np.zeros((2, 2)))])
    with pytest.raises(ValueError, match="shape"):
        CostModel((2, 3), [CostFactor((0, 1), np.zeros((2, 2)))])


def test_kernel_factor_forms():
    with pytest.raises(PositivityError):
        KernelFactor((0, 1), dense=np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        KernelFactor((0, 1, 2), U=np.ones((2, 1)), V=np.ones((2, 1)))
    with pytest.raises(ValueError):
        KernelFactor((0, 1))
    f = KernelFactor((0, 1), U=np.ones((3, 1)), V=2 * np.ones((4, 1)))
    assert f.is_lowrank and f.rank == 1 and f.shape == (3, 4)
    np.testing.assert_array_equal(f.to_dense(), 2 * np.ones((3, 4)))


def test_singleton_factors_accepted():
    K = KernelModel((3, 2), [KernelFactor((0,), dense=[1.0, 2.0, 3.0]), KernelFactor((0, 1), dense=np.ones((3, 2)))])
    np.testing.assert_array_equal(assemble_dense_kernel(K), [[1, 1], [2, 2], [3, 3]])


def test_gibbs_factor_examples():
    C = CostModel((2, 3), [CostFactor((0, 1), np.zeros((2, 3)))])
    np.testing.assert_array_equal(gibbs_factors(C, 0.7).factors[0].dense, np.ones((2, 3)))
    C = CostModel((1,), [CostFactor((0,), [math.log(2)])])
    assert gibbs_factors(C, 1.0).factors[0].dense[0] == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ValueError):
        gibbs_factors(C, 0.0)


@pytest.mark.parametrize("name", sorted(TOPOLOGIES))
def test_exp_commutes_with_assembly(name):
    m, alphas = TOPOLOGIES[name]
    rng = np.random.default_rng(11)
    C = random_cost(rng, [3] * m, alphas, scale=2.0)
    for eta in (0.3, 1.0):
        lhs = np.exp(-assemble_dense_cost(C) / eta)
        rhs = assemble_dense_kernel(gibbs_factors(C, eta))
        np.testing.assert_allclose(rhs, lhs, rtol=1e-13)


def test_rescaling_invariance_power_of_two_is_exact():
    rng = np.random.default_rng(12)
    C = random_cost(rng, [4, 4, 4], [(0, 1), (1, 2)], scale=3.0)
    for a in (0.25, 2.0, 1024.0):
        Ca = CostModel(C.mode_sizes, [CostFactor(f.alpha, a * f.values) for f in C.factors])
        for f, g in zip(gibbs_factors(C, 0.7).factors, gibbs_factors(Ca, a * 0.7).factors):
            np.testing.assert_array_equal(f.dense, g.dense)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.05, 5.0), st.integers(0, 2**32 - 1))
def test_rescaling_invariance(alpha, eta, seed):
    # exponents agree to a couple of ulps; exp scales that by the exponent's size
    values = np.random.default_rng(seed).random((5, 5)) * 4
    C = CostModel((5, 5), [CostFactor((0, 1), values)])
    Ca = CostModel((5, 5), [CostFactor((0, 1), alpha * values)])
    x = gibbs_factors(C, eta).factors[0].dense
    y = gibbs_factors(Ca, alpha * eta).factors[0].dense
    expo = values / eta
    assert np.all(np.abs(x - y) <= 4 * np.finfo(float).eps * (1 + expo) * x)


def test_assemble_cost_examples():
    rng = np.random.default_rng(13)
    full = rng.random((2, 3, 2))
    C = CostModel((2, 3, 2), [CostFactor((0, 1, 2), full)])
    np.testing.assert_array_equal(assemble_dense_cost(C), full)
    Z = CostModel((2, 2, 2, 2), [CostFactor((0, 1), np.zeros((2, 2))), CostFactor((2, 3), np.zeros((2, 2)))])
    assert not np.any(assemble_dense_cost(Z))


def test_chain_cost_loop_oracle():
    rng = np.random.default_rng(14)
    pts = [rng.random((3, 2)) for _ in range(4)]
    T = assemble_dense_cost(chain_cost(pts))
    for i, j, k, l in np.ndindex(3, 3, 3, 3):
        expect = (
            np.sum((pts[0][i] - pts[1][j]) ** 2)
            + np.sum((pts[1][j] - pts[2][k]) ** 2)
            + np.sum((pts[2][k] - pts[3][l]) ** 2)
        )
        assert T[i, j, k, l] == pytest.approx(expect, rel=1e-13)


@pytest.mark.parametrize("name", sorted(TOPOLOGIES))
def test_assemble_matches_loops(name):
    m, alphas = TOPOLOGIES[name]
    rng = np.random.default_rng(15)
    C = random_cost(rng, [3, 2, 3, 2, 3][:m], alphas)
    np.testing.assert_allclose(assemble_dense_cost(C), loop_cost(C), rtol=1e-14)
    K = random_kernel(rng, [3, 2, 3, 2, 3][:m], alphas)
    np.testing.assert_allclose(assemble_dense_kernel(K), loop_kernel(K), rtol=1e-14)


def test_assemble_kernel_examples():
    K = KernelModel((2, 3, 2), [KernelFactor((0, 1), dense=np.ones((2, 3))), KernelFactor((1, 2), dense=np.ones((3, 2)))])
    np.testing.assert_array_equal(assemble_dense_kernel(K), np.ones((2, 3, 2)))
    A = np.random.default_rng(16).random((3, 4)) + 0.1
    K = KernelModel((3, 4), [KernelFactor((0, 1), dense=A)])
    np.testing.assert_array_equal(assemble_dense_kernel(K), A)


def test_assembly_budget_and_lowrank_positivity():
    K = KernelModel((100, 100, 100), [KernelFactor((0, 1), dense=np.ones((100, 100))), KernelFactor((1, 2), dense=np.ones((100, 100)))])
    with pytest.raises(BudgetExceeded):
        assemble_dense_kernel(K, budget=10**5)
    bad = KernelFactor((0, 1), U=np.array([[1.0], [-1.0]]), V=np.ones((2, 1)))
    with pytest.raises(PositivityError):
        assemble_dense_kernel(KernelModel((2, 2), [bad]))


def test_sqdist_examples():
    assert sqdist_cost([[0.0, 0.0]], [[3.0, 4.0]])[0, 0] == 25.0
    rng = np.random.default_rng(17)
    X, Y = rng.random((7, 3)), rng.random((5, 3))
    assert np.all(np.diag(sqdist_cost(X, X)) == 0.0)
    ref = np.array([[sum((X[i, d] - Y[j, d]) ** 2 for d in range(3)) for j in range(5)] for i in range(7)])
    np.testing.assert_allclose(sqdist_cost(X, Y), ref, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(sqdist_cost(X, Y), sqdist_cost(Y, X).T)
    with pytest.raises(ValueError):
        sqdist_cost(np.zeros((0, 2)), Y[:, :2])
    with pytest.raises(ValueError):
        sqdist_cost(X, Y[:, :2])


def test_kernel_entries_match_dense():
    rng = np.random.default_rng(18)
    m, alphas = TOPOLOGIES["fig1"]
    K = random_kernel(rng, [2, 3, 2, 3, 2], alphas)
    T = assemble_dense_kernel(K)
    idx = np.array(list(np.ndindex(*T.shape)))
    np.testing.assert_allclose(K.entries(idx), T.ravel(), rtol=1e-14)


def test_sup_norm():
    rng = np.random.default_rng(19)
    C = random_cost(rng, [3, 3, 3], [(0, 1), (1, 2)])
    assert C.sup_norm() == assemble_dense_cost(C).max()
