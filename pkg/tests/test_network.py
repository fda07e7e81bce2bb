import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import TOPOLOGIES, loop_marginal, loop_scale, random_cost, random_kernel
from tnmot.factor_model import (
    CostFactor,
    CostModel,
    KernelFactor,
    KernelModel,
    PositivityError,
    assemble_dense_cost,
    assemble_dense_kernel,
)
from tnmot.lowrank import lowrank_kernel, tt_svd
from tnmot.network import (
    ContractionPlan,
    Contractor,
    FactorNetwork,
    Rank1Correction,
    Scalings,
    Vertex,
    build_network,
    eval_all_marginals,
    eval_cost,
    eval_marginal,
    flops,
    materialize,
    network_from_tt,
    plan_contraction,
    plan_marginal,
)
from tnmot.tensor_core import marginal, outer, scale_modes

WINDOW = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]


def chain_model(n, m=4, seed=0):
    rng = np.random.default_rng(seed)
    return random_kernel(rng, [n] * m, [(k, k + 1) for k in range(m - 1)])


def random_scalings(rng, sizes):
    return Scalings([0.5 + rng.random(n) for n in sizes])


def dense_marginals(K, s):
    P = scale_modes(assemble_dense_kernel(K), s.gammas)
    return [marginal(P, k) for k in range(P.ndim)]


def test_delta_degrees_chain():
    net = build_network(chain_model(3))
    assert len(net.vertices) == 3
    assert net.delta_degrees == {0: 2, 1: 3, 2: 3, 3: 2}


def test_delta_degrees_star_and_fig1():
    rng = np.random.default_rng(0)
    net = build_network(random_kernel(rng, [2] * 4, TOPOLOGIES["star4"][1]))
    assert net.delta_degree(3) == 4
    assert [net.delta_degree(k) for k in range(3)] == [2, 2, 2]
    net = build_network(random_kernel(rng, [2] * 5, TOPOLOGIES["fig1"][1]))
    assert net.delta_degree(3) == 4
    assert len(net.vertices) == 4


def test_lowrank_factor_becomes_two_vertices():
    K = lowrank_kernel(chain_model(6), 2, validate=False)
    net = build_network(K)
    assert len(net.vertices) == 6
    assert set(net.bond_sizes.values()) == {2}
    assert net.delta_degrees == {0: 2, 1: 3, 2: 3, 3: 2}


def test_network_validation():
    with pytest.raises(ValueError, match="attached to no vertex"):
        FactorNetwork((2, 2), [Vertex("a", (0,), np.ones(2))])
    with pytest.raises(ValueError, match="exactly two"):
        FactorNetwork((2,), [Vertex("a", (0, "b"), np.ones((2, 3)))])
    with pytest.raises(ValueError):
        FactorNetwork((2,), [Vertex("a", (0,), np.ones(3))])


@pytest.mark.parametrize("n", [3, 5, 50, 420])
def test_chain_single_marginal_costs_6n2(n):
    net = build_network(chain_model(n))
    assert flops(plan_marginal(net, 2)) == 6 * n * n
    assert flops(plan_marginal(net, 0)) == 6 * n * n


@pytest.mark.parametrize("n", [3, 7, 50])
def test_two_mode_marginal_is_matvec_plus_scaling(n):
    K = KernelModel((n, n), [KernelFactor((0, 1), dense=np.ones((n, n)))])
    plan = plan_marginal(build_network(K), 0)
    # the matrix-vector step, then the elementwise product with gamma_1
    assert plan.steps[0].flops == n * (2 * n - 1)
    assert flops(plan) == n * (2 * n - 1) + n


def test_flop_convention_elementwise_and_empty():
    n = 6
    net = FactorNetwork((n,), [Vertex("a", (0,), np.ones(n)), Vertex("b", (0,), np.ones(n))])
    plan = plan_marginal(net, 0)
    assert len(plan.steps) == 1 and flops(plan) == 2 * n
    assert flops(ContractionPlan((0,), (), 0)) == 0


@pytest.mark.parametrize("n", [5, 50, 420])
def test_all_marginals_cost_12n2_plus_4n(n):
    net = build_network(chain_model(n))
    _, count = eval_all_marginals(net, Scalings.ones(net.mode_sizes), return_flops=True)
    assert count == 12 * n * n + 4 * n


@pytest.mark.parametrize("n,r", [(50, 3), (200, 5), (420, 25)])
def test_lowrank_chain_sweep_linear_in_nr(n, r):
    rng = np.random.default_rng(1)
    U, V = rng.random((n, r)), rng.random((n, r))
    K = KernelModel((n,) * 4, [KernelFactor((k, k + 1), U=U, V=V) for k in range(3)])
    _, count = eval_all_marginals(build_network(K), Scalings.ones(K.mode_sizes), return_flops=True)
    assert count <= 40 * n * r


@pytest.mark.parametrize("r", [2, 3, 5])
def test_window_marginal_cost_linear_in_n(r):
    counts = []
    for n in (100, 200):
        U = np.ones((n, r))
        K = KernelModel((n,) * 5, [KernelFactor(a, U=U, V=U) for a in WINDOW])
        counts.append(flops(plan_marginal(build_network(K), 2)))
        assert counts[-1] <= 10 * (n * r**4 + r**5)
    assert abs(counts[1] / counts[0] - 2) <= 0.25 * 2


def test_marginal_of_ones_chain_counts():
    n = 4
    K = KernelModel((n,) * 4, [KernelFactor((k, k + 1), dense=np.ones((n, n))) for k in range(3)])
    for k in range(4):
        np.testing.assert_array_equal(eval_marginal(build_network(K), Scalings.ones(K.mode_sizes), k), n**3)


def test_two_mode_marginal_formula():
    rng = np.random.default_rng(2)
    A = rng.random((4, 5)) + 0.1
    K = KernelModel((4, 5), [KernelFactor((0, 1), dense=A)])
    s = Scalings([rng.random(4) + 0.1, rng.random(5) + 0.1])
    np.testing.assert_allclose(eval_marginal(build_network(K), s, 0), s[0] * (A @ s[1]), rtol=1e-14)


def test_chain_marginals_match_loop_oracle():
    rng = np.random.default_rng(3)
    K = chain_model(4, seed=3)
    s = random_scalings(rng, K.mode_sizes)
    P = loop_scale(assemble_dense_kernel(K), s.gammas)
    marg = eval_all_marginals(build_network(K), s)
    for k in range(4):
        np.testing.assert_allclose(marg[k], loop_marginal(P, k), rtol=1e-11)
        np.testing.assert_allclose(eval_marginal(build_network(K), s, k), marg[k], rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(TOPOLOGIES)), st.integers(0, 2**32 - 1))
def test_oracle_equivalence(name, seed):
    m, alphas = TOPOLOGIES[name]
    rng = np.random.default_rng(seed)
    sizes = tuple(int(x) for x in rng.integers(2, 6, m))
    K = random_kernel(rng, sizes, alphas)
    s = random_scalings(rng, sizes)
    got = eval_all_marginals(build_network(K), s)
    for g, ref in zip(got, dense_marginals(K, s)):
        np.testing.assert_allclose(g, ref, rtol=1e-11)


@pytest.mark.parametrize("name", sorted(TOPOLOGIES))
def test_plan_independence(name):
    m, alphas = TOPOLOGIES[name]
    rng = np.random.default_rng(4)
    K = random_kernel(rng, [3] * m, alphas)
    s = random_scalings(rng, K.mode_sizes)
    net = build_network(K)
    greedy = eval_marginal(net, s, 1)
    labels = [k for k in range(m) if k != 1]
    for order in (labels, labels[::-1]):
        plan = plan_marginal(net, 1, order=order)
        np.testing.assert_allclose(eval_marginal(net, s, 1, plan), greedy, rtol=1e-10)
    with pytest.raises(ValueError):
        plan_marginal(net, 1, order=labels[:-1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0), st.integers(0, 3))
def test_scaling_linearity(seed, c, k):
    rng = np.random.default_rng(seed)
    K = chain_model(3, seed=seed % 1000)
    s = random_scalings(rng, K.mode_sizes)
    net = build_network(K)
    before = eval_all_marginals(net, s)
    after = eval_all_marginals(net, s.replace(k, c * s[k]))
    for a, b in zip(before, after):
        np.testing.assert_allclose(b, c * a, rtol=1e-12)


def test_full_rank_lowrank_matches_dense():
    rng = np.random.default_rng(5)
    K = random_kernel(rng, [5] * 5, WINDOW)
    Kr = K.replace_factors(
        [KernelFactor(f.alpha, U=f.dense, V=np.eye(5)) for f in K.factors]
    )
    s = random_scalings(rng, K.mode_sizes)
    for a, b in zip(eval_all_marginals(build_network(Kr), s), eval_all_marginals(build_network(K), s)):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_tensor_train_network_matches_dense():
    rng = np.random.default_rng(6)
    T = rng.random((3, 4, 3, 2)) + 0.5
    tt = tt_svd(T, (3, 12, 2))
    s = random_scalings(rng, T.shape)
    net = network_from_tt(tt)
    P = scale_modes(tt.to_dense(), s.gammas)
    for k, got in enumerate(eval_all_marginals(net, s)):
        np.testing.assert_allclose(got, marginal(P, k), rtol=1e-11)


def test_cache_tracks_scaling_changes():
    rng = np.random.default_rng(7)
    K = chain_model(5, seed=7)
    c = Contractor(build_network(K))
    s = random_scalings(rng, K.mode_sizes)
    c.all_marginals(s)
    cold = c.flops
    c.all_marginals(s)
    assert c.flops == cold
    s2 = s.replace(0, s[0] * 2.0)
    got = c.all_marginals(s2)
    assert 0 < c.flops - cold < cold
    for a, b in zip(got, dense_marginals(K, s2)):
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_negative_lowrank_marginal_raises():
    U = np.array([[1.0], [-1.0]])
    K = KernelModel((2, 2), [KernelFactor((0, 1), U=U, V=np.ones((2, 1)))])
    with pytest.raises(PositivityError):
        eval_marginal(build_network(K), Scalings.ones((2, 2)), 0)


def test_scalings_contract():
    s = Scalings.ones((2, 3), fixed={1})
    with pytest.raises(ValueError):
        s.replace(1, np.ones(3))
    with pytest.raises(ValueError):
        Scalings([np.array([1.0, 0.0])])
    b = Scalings.from_betas([np.log([2.0, 3.0])])
    np.testing.assert_allclose(b[0], [2.0, 3.0])
    np.testing.assert_allclose(b.betas[0], np.log([2.0, 3.0]))


def test_eval_cost_zero_and_matrix_loop():
    rng = np.random.default_rng(8)
    A = rng.random((4, 3)) + 0.1
    Cv = rng.random((4, 3))
    K = KernelModel((4, 3), [KernelFactor((0, 1), dense=A)])
    s = Scalings([rng.random(4) + 0.1, rng.random(3) + 0.1])
    net = build_network(K)
    zero = CostModel((4, 3), [CostFactor((0, 1), np.zeros((4, 3)))])
    assert eval_cost(net, s, zero) == 0.0
    ref = sum(Cv[i, j] * s[0][i] * A[i, j] * s[1][j] for i in range(4) for j in range(3))
    assert eval_cost(net, s, CostModel((4, 3), [CostFactor((0, 1), Cv)])) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("name", sorted(TOPOLOGIES))
def test_eval_cost_with_correction_matches_dense(name):
    m, alphas = TOPOLOGIES[name]
    rng = np.random.default_rng(9)
    sizes = (4, 3, 4, 3, 2)[:m]
    K = random_kernel(rng, sizes, alphas)
    C = random_cost(rng, sizes, alphas)
    s = random_scalings(rng, sizes)
    corr = Rank1Correction(tuple(rng.random(n) for n in sizes), 0.37)
    net = build_network(K)
    P = scale_modes(assemble_dense_kernel(K), s.gammas) + 0.37 * outer(*corr.vectors)
    expect = float(np.sum(assemble_dense_cost(C) * P))
    assert eval_cost(net, s, C, corr) == pytest.approx(expect, rel=1e-10)
    np.testing.assert_allclose(materialize(net, s, corr), P, rtol=1e-12)
    for k in range(m):
        np.testing.assert_allclose(corr.marginal(k), marginal(corr.to_dense(), k), rtol=1e-12)


def test_eval_cost_rejects_mismatch():
    K = chain_model(3)
    C = CostModel((3, 3), [CostFactor((0, 1), np.zeros((3, 3)))])
    with pytest.raises(ValueError):
        eval_cost(build_network(K), Scalings.ones(K.mode_sizes), C)


def test_plan_rejects_bad_outputs():
    net = build_network(chain_model(3))
    with pytest.raises(ValueError):
        plan_contraction(net, (0, 0))
    with pytest.raises(ValueError):
        plan_contraction(net, (4,))
