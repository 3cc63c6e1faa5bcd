import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairfgl.graph import Graph, edge_cut, homophily_scores, induce_subgraph, normalize_adjacency

from .conftest import graph_from, random_graph


def test_graph_rejects_overlapping_masks():
    m = np.array([True, False])
    with pytest.raises(ValueError, match="disjoint"):
        Graph(np.zeros((2, 1)), [0, 0], [], m, m, ~m, 1)


def test_graph_rejects_duplicate_and_out_of_range_edges():
    m = np.ones(3, dtype=bool)
    z = ~m
    with pytest.raises(ValueError, match="duplicate"):
        Graph(np.zeros((3, 1)), [0, 0, 0], [(0, 1), (1, 0)], m, z, z, 1)
    with pytest.raises(ValueError, match="out of range"):
        Graph(np.zeros((3, 1)), [0, 0, 0], [(0, 5)], m, z, z, 1)


def test_graph_arrays_are_read_only(small_graph):
    with pytest.raises(ValueError):
        small_graph.labels[0] = 1


def test_normalize_two_nodes_symmetric():
    g = graph_from([(0, 1)], [0, 0])
    A = normalize_adjacency(g, 0.5).toarray()
    np.testing.assert_allclose(A, np.full((2, 2), 0.5))


def test_normalize_isolated_node():
    g = graph_from([], [0])
    for r in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(normalize_adjacency(g, r).toarray(), [[1.0]])


def test_normalize_two_nodes_r1_stochastic():
    A = normalize_adjacency(graph_from([(0, 1)], [0, 0]), 1.0).toarray()
    np.testing.assert_allclose(A.sum(axis=1), 1.0)
    np.testing.assert_allclose(A.sum(axis=0), 1.0)


def test_normalize_matches_dense_formula(small_graph):
    A = small_graph.adjacency().toarray() + np.eye(small_graph.num_nodes)
    d = A.sum(1)
    for r in (0.0, 0.25, 0.5, 1.0):
        expected = np.diag(d ** (r - 1)) @ A @ np.diag(d ** -r)
        np.testing.assert_allclose(normalize_adjacency(small_graph, r).toarray(), expected, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_normalize_invariants(seed):
    g = random_graph(n=30, p=0.2, seed=seed)
    S = normalize_adjacency(g, 0.5).toarray()
    assert np.max(np.abs(S - S.T)) < 1e-12
    assert np.all(np.diag(S) > 0) and np.all(S >= 0)
    # D^(r-1) A D^(-r): r=0 is row-stochastic, r=1 column-stochastic
    np.testing.assert_allclose(normalize_adjacency(g, 0.0).toarray().sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(normalize_adjacency(g, 1.0).toarray().sum(0), 1.0, atol=1e-12)


def test_homophily_examples():
    # node 0 (label 1) with neighbours labelled 1, 1, 0
    g = graph_from([(0, 1), (0, 2), (0, 3)], [1, 1, 1, 0])
    assert homophily_scores(g)[0] == pytest.approx(2 / 3)
    assert homophily_scores(graph_from([], [0, 1]))[0] == 0.0
    clique = graph_from([(0, 1), (0, 2), (1, 2)], [2, 2, 2])
    np.testing.assert_array_equal(homophily_scores(clique), 1.0)


def test_homophily_labeled_only_ignores_unlabeled_neighbours():
    g = graph_from([(0, 1), (0, 2), (0, 3)], [1, 1, 1, 0], train=[True, True, False, False])
    assert homophily_scores(g, use_labeled_only=True)[0] == 1.0
    assert homophily_scores(g, use_labeled_only=True)[3] == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_homophily_bounded_and_permutation_equivariant(seed):
    g = random_graph(n=15, seed=seed)
    h = homophily_scores(g)
    assert np.all((h >= 0) & (h <= 1))
    perm = np.random.default_rng(seed).permutation(g.num_nodes)
    inv = np.argsort(perm)
    gp = Graph(g.features[perm], g.labels[perm], inv[g.edges], g.train_mask[perm], g.val_mask[perm], g.test_mask[perm], g.num_classes)
    np.testing.assert_allclose(homophily_scores(gp), h[perm])


def test_induce_subgraph_examples(small_graph):
    full = induce_subgraph(small_graph, np.arange(small_graph.num_nodes))
    assert full.same_as(small_graph)
    one = induce_subgraph(small_graph, [3])
    assert one.num_nodes == 1 and one.num_edges == 0
    tri = graph_from([(0, 1), (0, 2), (1, 2)], [0, 0, 0])
    sub = induce_subgraph(tri, [0, 1])
    assert sub.num_nodes == 2 and sub.num_edges == 1
    with pytest.raises(ValueError):
        induce_subgraph(tri, [])


def test_induced_parts_preserve_intra_edges(small_graph):
    part = np.random.default_rng(1).integers(0, 3, small_graph.num_nodes)
    kept = sum(induce_subgraph(small_graph, np.flatnonzero(part == p)).num_edges for p in range(3))
    assert kept == small_graph.num_edges - edge_cut(small_graph, part)
