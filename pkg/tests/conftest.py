from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from tgasi.graph import Graph, load_edge_list

DATA = Path(__file__).resolve().parents[1] / "data"


def jazz_path():
    real = DATA / "jazz.txt"
    return real if real.exists() else DATA / "jazz_surrogate.txt"


def random_graph(n, p, seed, connected=True):
    rng = np.random.default_rng(seed)
    while True:
        g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
        if not connected or nx.is_connected(g):
            return Graph.from_edges(g.edges(), node_count=n)


@pytest.fixture(scope="session")
def karate():
    return load_edge_list(DATA / "karate.txt")


@pytest.fixture(scope="session")
def jazz():
    return load_edge_list(jazz_path(), name="jazz")


@pytest.fixture
def path3():
    return Graph.from_edges([(0, 1), (1, 2)])


@pytest.fixture
def star5():
    return Graph.from_edges([(0, i) for i in range(1, 5)])
