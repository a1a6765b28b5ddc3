import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphite import meanfield as MF
from graphite.graph import Graph, generate

from helpers import cycle


def test_neighbor_vector_cases():
    iso = Graph.from_edges(3, [(0, 1)]).adjacency
    emb = np.array([1.0, 2.0, 3.0])
    assert not MF.neighbor_vector(iso, emb, 2).any()
    k3 = cycle(3).adjacency
    np.testing.assert_array_equal(MF.neighbor_vector(k3, emb, 0), [0, 2, 3])
    star = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)]).adjacency
    assert np.count_nonzero(MF.neighbor_vector(star, np.ones(4), 0)) == 3


def test_constant_operator():
    op = MF.UpdateOperator(lambda v: 2.5, name="const")
    out = MF.mf_embedding_update(op, cycle(4).adjacency, np.arange(4.0))
    np.testing.assert_array_equal(out, 2.5)


def test_sum_on_triangle():
    op = MF.linear_operator(np.ones(3))
    np.testing.assert_allclose(MF.mf_embedding_update(op, cycle(3).adjacency, np.array([1.0, 2.0, 3.0])), [5, 4, 3])


def test_locality(rng):
    a = generate("erdos_renyi", 8, seed=3, p=0.3).adjacency
    op = MF.logistic_operator(rng.normal(size=8), 0.2)
    emb = rng.normal(size=8)
    base = MF.mf_embedding_update(op, a, emb)
    for j in range(8):
        bumped = emb.copy()
        bumped[j] += 1.7
        changed = MF.mf_embedding_update(op, a, bumped)
        non_nb = a[:, j] == 0
        np.testing.assert_array_equal(changed[non_nb], base[non_nb])


def test_taylor_cases(rng):
    w = rng.normal(size=5)
    lin = MF.linear_operator(w, 0.4)
    v = rng.normal(size=5)
    assert MF.taylor_first_order(lin, v)[0] == pytest.approx(lin(v)[0])
    assert MF.taylor_first_order(MF.sine_sum_operator(), v)[0] == pytest.approx(v.sum())
    assert MF.taylor_first_order(MF.logistic_operator(w, 0.4), np.zeros(5))[0] == pytest.approx(1 / (1 + np.exp(-0.4)))


def test_finite_difference_jacobian_matches_analytic(rng):
    w = rng.normal(size=4)
    analytic = MF.logistic_operator(w, -0.3)
    numeric = MF.UpdateOperator(analytic.fn)
    np.testing.assert_allclose(numeric.jacobian_at_zero((4,)), analytic.jacobian_at_zero((4,)), atol=1e-9)


@given(st.integers(2, 8), st.integers(0, 10_000))
def test_constructed_gnn_equals_taylor(n, seed):
    r = np.random.default_rng(seed)
    a = generate("erdos_renyi", n, seed=seed).adjacency
    op = MF.random_operator(n, r)
    rep = MF.check_theorem(op, a, r.normal(size=n))
    assert rep["max_abs_diff_vs_taylor"] <= 1e-12


def test_linear_operator_exact(rng):
    a = generate("erdos_renyi", 7, seed=1).adjacency
    op = MF.linear_operator(rng.normal(size=7), 1.1)
    emb = rng.normal(size=7)
    gnn = MF.construct_equivalent_gnn(op, a)
    np.testing.assert_allclose(gnn(emb), MF.mf_embedding_update(op, a, emb), atol=1e-12)
    assert max(MF.check_theorem(op, a, emb)["remainder"]) <= 1e-12


def test_quadratic_remainder_ratio(rng):
    a = generate("erdos_renyi", 6, seed=2).adjacency
    rep = MF.check_theorem(MF.quadratic_operator(), a, rng.normal(size=6))
    assert all(3.5 <= r <= 4.5 for r in rep["remainder_ratios"])


def test_vector_embeddings(rng):
    n, d = 5, 3
    a = generate("erdos_renyi", n, seed=4).adjacency
    w = rng.normal(size=(n, d))
    op = MF.UpdateOperator(lambda v: np.array([np.sin(v).sum(), (w * v).sum(), np.tanh(v[:, 0]).sum()]), name="vec")
    emb = rng.normal(size=(n, d))
    gnn = MF.construct_equivalent_gnn(op, a, emb.shape)
    taylor = np.stack([MF.taylor_first_order(op, MF.neighbor_vector(a, emb, i)) for i in range(n)])
    assert np.abs(gnn(emb) - taylor).max() <= 1e-8  # finite-difference Jacobian
    assert gnn(emb).shape == (n, 3)
