import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphite.graph import (FAMILIES, Graph, SplitError, generate, is_connected, largest_connected_component,
                            normalize_sym, pad_with_dummy_nodes, read_edgelist, split_edges, wl_test, write_edgelist)

from helpers import connected_er, cycle


def test_graph_rejects_asymmetric():
    with pytest.raises(ValueError):
        Graph(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_normalize_two_nodes():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(normalize_sym(a), a)


def test_normalize_star():
    a = Graph.from_edges(3, [(0, 1), (0, 2)]).adjacency
    out = normalize_sym(a)
    assert out[0, 1] == pytest.approx(1 / np.sqrt(2)) and out[0, 2] == pytest.approx(0.70711, abs=1e-5)


def test_normalize_isolated_zero_row():
    g = Graph.from_edges(3, [(0, 1)])
    out = normalize_sym(g)
    assert not out[2].any() and not out[:, 2].any()


@given(st.integers(2, 12), st.integers(0, 1000))
def test_normalize_matches_explicit_degree_matrix(n, seed):
    a = generate("erdos_renyi", n, seed=seed).adjacency
    d = a.sum(1)
    dinv = np.diag([1 / np.sqrt(x) if x > 0 else 0.0 for x in d])
    np.testing.assert_allclose(normalize_sym(a), dinv @ a @ dinv, atol=1e-15)
    np.testing.assert_allclose(normalize_sym(a, sparse=True).toarray(), dinv @ a @ dinv, atol=1e-15)


# ------------------------------------------------------------- WL


@given(st.sampled_from(FAMILIES), st.integers(0, 500))
def test_wl_no_false_negative(family, seed):
    g = generate(family, 12, seed=seed)
    perm = np.random.default_rng(seed + 1).permutation(g.n)
    assert wl_test(g, g.permuted(perm)).isomorphic


def test_wl_path_vs_triangle():
    p3 = Graph.from_edges(3, [(0, 1), (1, 2)])
    assert not wl_test(p3, cycle(3)).isomorphic


def test_wl_c6_vs_two_triangles_false_positive():
    two_c3 = Graph.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    res = wl_test(cycle(6), two_c3)
    assert res.isomorphic
    for h1, h2 in res.history:
        assert len(set(h1.tolist())) == 1 and len(set(h2.tolist())) == 1


def test_wl_distinguishes_different_trees():
    star = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    path = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert not wl_test(star, path).isomorphic


# ------------------------------------------------------ generators


@pytest.mark.parametrize("family", FAMILIES)
def test_generated_graphs_are_simple_and_deterministic(family):
    g1, g2 = generate(family, 16, seed=3), generate(family, 16, seed=3)
    np.testing.assert_array_equal(g1.adjacency, g2.adjacency)
    a = g1.adjacency
    assert (a == a.T).all() and not np.diag(a).any() and set(np.unique(a)) <= {0.0, 1.0}


def test_regular_degrees():
    g = generate("regular", 10, seed=0)
    assert (g.degrees() == 4).all() and g.num_edges == 20


def test_barabasi_albert_edge_count():
    assert generate("barabasi_albert", 20, seed=5).num_edges == 64


def test_erdos_renyi_mean_edges():
    mean = np.mean([generate("erdos_renyi", 10, seed=s).num_edges for s in range(1000)])
    assert 21.0 <= mean <= 24.0


@given(st.integers(2, 20), st.integers(0, 1000))
def test_powerlaw_tree_is_tree(n, seed):
    g = generate("powerlaw_tree", n, seed=seed)
    assert g.num_edges == n - 1 and is_connected(g)


def test_ego_center_adjacent_to_all():
    g = generate("ego", 15, seed=2)
    c = g.attrs["center"]
    assert g.degrees()[c] == 14


def test_geometric_edges_match_distances():
    g = generate("geometric", 20, seed=4)
    pts = g.attrs["points"]
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    expect = (d < 0.5) & ~np.eye(20, dtype=bool)
    np.testing.assert_array_equal(g.adjacency.astype(bool), expect)


# ------------------------------------------------ components, padding


def test_lcc_cases():
    c3 = cycle(3)
    assert largest_connected_component(c3) is c3
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 0)])
    assert largest_connected_component(g).n == 3
    c4_c3 = Graph.from_edges(7, [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 4)])
    lcc = largest_connected_component(c4_c3)
    assert lcc.n == 4 and lcc.num_edges == 4
    np.testing.assert_array_equal(lcc.attrs["kept_nodes"], [0, 1, 2, 3])


def test_padding():
    c3 = cycle(3)
    assert pad_with_dummy_nodes(c3, 3) is c3
    p = pad_with_dummy_nodes(c3, 5)
    assert p.n == 5 and not p.adjacency[3:].any() and not p.adjacency[:, 3:].any()
    assert p.degrees().sum() == c3.degrees().sum() and p.attrs["real_nodes"] == 3


# --------------------------------------------------------- splitting


def _hundred_edge_graph():
    r = np.random.default_rng(0)
    while True:
        g = generate("erdos_renyi", 30, seed=int(r.integers(1 << 30)), p=100 / 435)
        if g.num_edges == 100 and is_connected(g):
            return g


def test_split_sizes():
    s = split_edges(_hundred_edge_graph(), seed=1)
    assert len(s.val_pos) == 5 and len(s.test_pos) == 10 and s.train_graph.num_edges == 85
    assert len(s.val_neg) == 5 and len(s.test_neg) == 10


def test_split_nothing_held_out():
    g = connected_er(10, 0)
    s = split_edges(g, 0.0, 0.0, seed=0)
    np.testing.assert_array_equal(s.train_graph.adjacency, g.adjacency)
    assert s.val_pos.size == s.test_pos.size == 0


@given(st.integers(0, 300))
def test_split_invariants(seed):
    g = connected_er(25, seed, p=0.3)
    s = split_edges(g, 0.1, 0.2, seed=seed)
    assert is_connected(s.train_graph)
    held = np.concatenate([s.val_pos, s.test_pos])
    assert (g.adjacency[held[:, 0], held[:, 1]] == 1).all()
    assert (s.train_graph.adjacency[held[:, 0], held[:, 1]] == 0).all()
    neg = np.concatenate([s.val_neg, s.test_neg])
    assert (g.adjacency[neg[:, 0], neg[:, 1]] == 0).all() and (neg[:, 0] != neg[:, 1]).all()
    assert len({tuple(e) for e in neg.tolist()}) == len(neg)


def test_split_disconnected_raises():
    g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    with pytest.raises(SplitError):
        split_edges(g, 0.2, 0.2, seed=0)


def test_edgelist_roundtrip(tmp_path):
    g = connected_er(12, 3)
    path = tmp_path / "g.tsv"
    write_edgelist(g, path)
    np.testing.assert_array_equal(read_edgelist(path, n=12).adjacency, g.adjacency)
