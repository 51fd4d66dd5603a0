"""Undirected graph container, SNAP edge-list ingestion and hop distances."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from tgasi import kernels

INF = math.inf


class GraphFormatError(ValueError):
    """Raised for unreadable or empty edge-list files."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph on contiguous ids ``0..node_count-1``.

    ``original_ids[i]`` is the id node ``i`` carried in the source file.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    name: str = "graph"
    original_ids: tuple = field(default=())

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        clean = set()
        for u, v in self.edges:
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if u != v:
                clean.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        if not self.original_ids:
            object.__setattr__(self, "original_ids", tuple(range(self.node_count)))

    @classmethod
    def from_edges(cls, edges, node_count=None, name="graph"):
        edges = [(int(u), int(v)) for u, v in edges]
        if node_count is None:
            node_count = 1 + max(max(e) for e in edges) if edges else 1
        return cls(node_count=node_count, edges=tuple(edges), name=name)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) of the symmetric adjacency, neighbours sorted."""
        n = self.node_count
        if not self.edges:
            return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        e = np.asarray(self.edges, dtype=np.int64)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst

    @cached_property
    def directed_edges(self) -> np.ndarray:
        """(2|E|, 2) array of (u, v) pairs in CSR order."""
        indptr, indices = self.csr
        src = np.repeat(np.arange(self.node_count), np.diff(indptr))
        return np.stack([src, indices], axis=1)

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.csr[0])

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=bool)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = True
            a[e[:, 1], e[:, 0]] = True
        return a

    def neighbors(self, u: int) -> np.ndarray:
        indptr, indices = self.csr
        return indices[indptr[u]:indptr[u + 1]]

    @cached_property
    def checksum(self) -> str:
        h = hashlib.sha256(f"{self.node_count}\n".encode())
        for u, v in self.edges:
            h.update(f"{u} {v}\n".encode())
        return h.hexdigest()

    @cached_property
    def components(self) -> np.ndarray:
        """Component label per node; label 0 is the largest component."""
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import connected_components

        indptr, indices = self.csr
        m = csr_matrix((np.ones(len(indices)), indices, indptr),
                       shape=(self.node_count, self.node_count))
        _, labels = connected_components(m, directed=False)
        sizes = np.bincount(labels)
        # relabel by decreasing size, ties by first appearance
        order = sorted(range(len(sizes)), key=lambda c: (-sizes[c], c))
        remap = np.empty(len(sizes), dtype=np.int64)
        remap[order] = np.arange(len(sizes))
        return remap[labels]

    def largest_component(self) -> np.ndarray:
        return np.flatnonzero(self.components == 0)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "node_count": self.node_count,
            "edges": [list(e) for e in self.edges],
            "original_ids": list(self.original_ids),
            "checksum": self.checksum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        g = cls(node_count=d["node_count"], edges=tuple(tuple(e) for e in d["edges"]),
                name=d.get("name", "graph"), original_ids=tuple(d.get("original_ids", ())))
        if "checksum" in d and d["checksum"] != g.checksum:
            raise ValueError("graph checksum mismatch")
        return g


def load_edge_list(path, name=None) -> Graph:
    """Read a SNAP-style edge list into a :class:`Graph`.

    Lines starting with ``#`` and blank lines are skipped. Duplicate edges
    collapse, self-loops are dropped and ids are remapped to ``0..n-1`` in
    order of increasing original id.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"edge list not found: {path}")
    raw = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                raw.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
    raw = [(u, v) for u, v in raw if u != v]
    if not raw:
        raise GraphFormatError(f"{path}: no edges after removing comments and self-loops")
    ids = sorted({x for e in raw for x in e})
    index = {x: i for i, x in enumerate(ids)}
    edges = tuple((index[u], index[v]) for u, v in raw)
    return Graph(node_count=len(ids), edges=edges, name=name or path.stem,
                 original_ids=tuple(ids))


def normalized_adjacency(g: Graph, w=None) -> np.ndarray:
    """Symmetrically normalised ``A + I (+ W)``.

    Returns ``D^{-1/2} (A + I + W) D^{-1/2}`` with ``D`` the row sums of the
    augmented matrix. ``w`` is an :class:`~tgasi.influence.InfluenceMatrix`
    or a dense array that is zero off the edge set.
    """
    a_hat = g.adjacency.astype(np.float64) + np.eye(g.node_count)
    if w is not None:
        values = getattr(w, "values", w)
        mask = getattr(w, "edge_mask", None)
        if mask is not None and not np.array_equal(mask, g.adjacency):
            raise ValueError("influence matrix edge mask does not match the graph")
        if values.shape != a_hat.shape:
            raise ValueError(f"influence matrix shape {values.shape} != {a_hat.shape}")
        a_hat = a_hat + values
    d = a_hat.sum(axis=1)
    assert np.all(d > 0), "row sums of A + I must be positive"
    inv_sqrt = 1.0 / np.sqrt(d)
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hop distances from ``source``; unreachable nodes get -1."""
    if not 0 <= source < g.node_count:
        raise IndexError(f"node {source} not in graph with {g.node_count} nodes")
    indptr, indices = g.csr
    return kernels.bfs_distances(indptr, indices, source)


def hop_distance(g: Graph, u: int, v: int) -> float:
    """Shortest-path hop count between ``u`` and ``v``; ``INF`` if disconnected."""
    if not 0 <= v < g.node_count:
        raise IndexError(f"node {v} not in graph with {g.node_count} nodes")
    d = bfs_distances(g, u)[v]
    return INF if d < 0 else int(d)
