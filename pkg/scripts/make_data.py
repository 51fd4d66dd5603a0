"""Write the bundled edge lists under ``data/``.

``karate.txt`` is Zachary's karate club as shipped with networkx.
``jazz_surrogate.txt`` is a seeded clustered graph with the same size as the
Gleiser-Danon jazz collaboration network (198 nodes, 2742 edges). Drop the real
``jazz.txt`` next to it and the tests and experiments pick it up instead.
"""

from pathlib import Path

import networkx as nx
import numpy as np

DATA = Path(__file__).resolve().parents[1] / "data"
JAZZ_NODES, JAZZ_EDGES = 198, 2742


def write_edges(path, g, header):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for u, v in sorted(tuple(sorted(e)) for e in g.edges()):
            fh.write(f"{u}\t{v}\n")


def jazz_surrogate(seed=1998):
    rng = np.random.default_rng(seed)
    g = nx.powerlaw_cluster_graph(JAZZ_NODES, 14, 0.6, seed=seed)
    nodes = np.arange(JAZZ_NODES)
    while g.number_of_edges() < JAZZ_EDGES:
        # triadic closure keeps the clustering high, like the real network
        u = int(rng.choice(nodes))
        nbrs = list(g.neighbors(u))
        a = int(rng.choice(nbrs))
        b_choices = [x for x in g.neighbors(a) if x != u and not g.has_edge(u, x)]
        if b_choices:
            g.add_edge(u, int(rng.choice(b_choices)))
    while g.number_of_edges() > JAZZ_EDGES:
        u, v = list(g.edges())[int(rng.integers(g.number_of_edges()))]
        g.remove_edge(u, v)
        if not nx.is_connected(g):
            g.add_edge(u, v)
    assert nx.is_connected(g)
    return g


def main():
    DATA.mkdir(exist_ok=True)
    write_edges(DATA / "karate.txt", nx.karate_club_graph(),
                ["Zachary karate club (networkx.karate_club_graph)", "nodes 34 edges 78"])
    g = jazz_surrogate()
    write_edges(DATA / "jazz_surrogate.txt", g,
                ["Jazz-sized surrogate: powerlaw-cluster graph + triadic closure, seed 1998",
                 f"nodes {g.number_of_nodes()} edges {g.number_of_edges()} "
                 f"clustering {nx.average_clustering(g):.3f}"])


if __name__ == "__main__":
    main()
