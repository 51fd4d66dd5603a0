import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tgasi.graph import Graph, GraphFormatError, hop_distance, load_edge_list, normalized_adjacency

from conftest import random_graph


def test_karate_counts(karate):
    assert (karate.node_count, karate.edge_count) == (34, 78)


def test_jazz_counts(jazz):
    assert (jazz.node_count, jazz.edge_count) == (198, 2742)


def test_dedup_and_self_loops(tmp_path):
    f = tmp_path / "tiny.txt"
    f.write_text("# comment\n0 1\n1 0\n1 1\n")
    g = load_edge_list(f)
    assert g.node_count == 2
    assert g.edges == ((0, 1),)


def test_remap_keeps_original_ids(tmp_path):
    f = tmp_path / "ids.txt"
    f.write_text("10 30\n30 20\n")
    g = load_edge_list(f)
    assert g.original_ids == (10, 20, 30)
    assert g.edges == ((0, 2), (1, 2))


def test_malformed_line_reports_number(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0 1\n2\n")
    with pytest.raises(GraphFormatError, match=":2:"):
        load_edge_list(f)
    f.write_text("0 x\n")
    with pytest.raises(GraphFormatError, match=":1:"):
        load_edge_list(f)


def test_missing_and_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "nope.txt")
    f = tmp_path / "loops.txt"
    f.write_text("# only loops\n3 3\n")
    with pytest.raises(GraphFormatError):
        load_edge_list(f)


def test_adjacency_symmetric_no_loops(karate):
    a = karate.adjacency
    assert np.array_equal(a, a.T)
    assert not a.diagonal().any()
    assert np.array_equal(a.sum(1), karate.degree)


def test_normalized_adjacency_single_edge():
    g = Graph.from_edges([(0, 1)])
    np.testing.assert_allclose(normalized_adjacency(g), [[0.5, 0.5], [0.5, 0.5]])


def test_normalized_adjacency_isolated_node():
    g = Graph(node_count=1, edges=())
    np.testing.assert_allclose(normalized_adjacency(g), [[1.0]])


def test_normalized_adjacency_path_with_influence(path3):
    w = 0.5 * path3.adjacency
    # A_hat = [[1, 1.5, 0], [1.5, 1, 1.5], [0, 1.5, 1]], row sums 2.5, 4, 2.5
    d = np.array([2.5, 4.0, 2.5])
    a_hat = np.array([[1, 1.5, 0], [1.5, 1, 1.5], [0, 1.5, 1]])
    expected = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            expected[i, j] = a_hat[i, j] / math.sqrt(d[i] * d[j])
    np.testing.assert_allclose(normalized_adjacency(path3, w), expected, rtol=0, atol=1e-15)


def test_normalized_adjacency_rejects_shape(path3):
    with pytest.raises(ValueError):
        normalized_adjacency(path3, np.zeros((2, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 15), st.floats(0.1, 0.9), st.integers(0, 10**6))
def test_normalized_adjacency_rows(n, p, seed):
    g = random_graph(n, p, seed, connected=False)
    m = normalized_adjacency(g)
    a_hat = g.adjacency + np.eye(n)
    d = a_hat.sum(1)
    np.testing.assert_allclose(m.sum(1), (a_hat / np.sqrt(np.outer(d, d))).sum(1))
    np.testing.assert_allclose(m, m.T)
    assert np.all(np.isfinite(m)) and np.all(m >= 0)


def test_hop_distance_basics(path3):
    assert hop_distance(path3, 1, 1) == 0
    assert hop_distance(path3, 0, 2) == 2
    g = Graph.from_edges([(0, 1)], node_count=3)
    assert hop_distance(g, 0, 2) == math.inf
    with pytest.raises(IndexError):
        hop_distance(path3, 0, 7)


def floyd_warshall(adj):
    n = len(adj)
    d = np.where(adj, 1.0, np.inf)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


@pytest.mark.parametrize("seed", range(5))
def test_hop_distance_matches_floyd_warshall(seed):
    g = random_graph(10, 0.3, seed, connected=False)
    fw = floyd_warshall(g.adjacency)
    for u in range(10):
        for v in range(10):
            assert hop_distance(g, u, v) == fw[u, v]


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10**6))
def test_hop_distance_is_metric(n, seed):
    g = random_graph(n, 0.25, seed, connected=False)
    d = np.array([[hop_distance(g, u, v) for v in range(n)] for u in range(n)])
    assert np.array_equal(d, d.T)
    for a, b, c in itertools.product(range(n), repeat=3):
        assert d[a, c] <= d[a, b] + d[b, c]


def test_checksum_stable_under_edge_order():
    a = Graph.from_edges([(0, 1), (1, 2)])
    b = Graph.from_edges([(2, 1), (1, 0), (0, 1)])
    assert a.checksum == b.checksum
    assert Graph.from_dict(a.to_dict()).edges == a.edges
