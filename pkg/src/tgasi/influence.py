"""Estimation of the per-edge influence matrix from available snapshots.

The next-state map is the one-shot cascade product

    f_i = 1 - prod_{j in N(i)} (1 - W[j, i] * delta_j),

with ``delta = Y^s - Y^{s-1}`` the nodes that became infected between the
two most recent observations. ``W[i, j]`` is the probability that an
infected ``i`` activates its neighbour ``j``; entries off the edge set are
held at exactly zero and negative raw values enter the forward pass as their
absolute value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from tgasi.graph import Graph
from tgasi.io import atomic_write_text

_LOG_FLOOR = 1e-300


@dataclass(eq=False)
class InfluenceMatrix:
    values: np.ndarray
    edge_mask: np.ndarray
    graph_checksum: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.edge_mask = np.asarray(self.edge_mask, dtype=bool)
        if self.values.shape != self.edge_mask.shape:
            raise ValueError("values and edge_mask shapes differ")
        if np.any(self.values[~self.edge_mask] != 0):
            raise ValueError("influence values must be zero off the edge set")

    @classmethod
    def constant(cls, g: Graph, value: float) -> "InfluenceMatrix":
        return cls(value * g.adjacency, g.adjacency, g.checksum)

    @property
    def node_count(self) -> int:
        return self.values.shape[0]

    def save(self, path):
        """Sparse ``i<TAB>j<TAB>value`` triplets over every directed edge."""
        n = self.node_count
        rows, cols = np.nonzero(self.edge_mask)
        lines = ["# tgasi influence matrix",
                 f"# graph_checksum {self.graph_checksum}",
                 f"# node_count {n}"]
        lines += [f"{i}\t{j}\t{float(self.values[i, j])!r}" for i, j in zip(rows, cols)]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "InfluenceMatrix":
        checksum, n, trip = "", None, []
        with open(Path(path), encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("# graph_checksum"):
                    checksum = line.split()[2] if len(line.split()) > 2 else ""
                elif line.startswith("# node_count"):
                    n = int(line.split()[2])
                elif line.strip() and not line.startswith("#"):
                    i, j, v = line.split("\t")
                    trip.append((int(i), int(j), float(v)))
        if n is None:
            raise ValueError(f"{path}: missing node_count header")
        values = np.zeros((n, n))
        mask = np.zeros((n, n), dtype=bool)
        for i, j, v in trip:
            values[i, j] = v
            mask[i, j] = True
        return cls(values, mask, checksum)


@dataclass
class EstimatorConfig:
    learning_rate: float = 0.01
    epochs: int = 300
    init_low: float = 0.05
    init_high: float = 0.15
    tolerance: float = 1e-6
    patience: int = 10
    parametrization: str = "mlp"  # "mlp" or "free"
    hidden: int = 16
    target: str = "susceptible"  # "susceptible" or "all"
    seed: int = 0

    def __post_init__(self):
        if self.parametrization not in ("mlp", "free"):
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        if self.target not in ("susceptible", "all"):
            raise ValueError(f"unknown target {self.target!r}")
        if min(self.learning_rate, self.epochs, self.tolerance, self.patience, self.hidden) <= 0:
            raise ValueError("estimator settings must be positive")
        if not 0 <= self.init_low <= self.init_high:
            raise ValueError("bad initialisation range")

    def to_dict(self):
        return asdict(self)


def predict_next_state(w, y_s, y_prev) -> np.ndarray:
    """Activation probability of every node at the next observation."""
    values = getattr(w, "values", w)
    y_s = np.asarray(y_s, dtype=np.float64)
    y_prev = np.asarray(y_prev, dtype=np.float64)
    n = values.shape[0]
    if y_s.shape != (n,) or y_prev.shape != (n,):
        raise ValueError(f"snapshot length must be {n}")
    # recovered nodes (SIR) count as not newly infected
    delta = np.clip(y_s - y_prev, 0.0, 1.0)
    return 1.0 - np.prod(1.0 - values * delta[:, None], axis=0)


def predict_next_state_batch(w: torch.Tensor, delta: torch.Tensor) -> torch.Tensor:
    """Batched torch form for binary ``delta`` of shape (P, |V|)."""
    log_keep = torch.log(torch.clamp(1.0 - w, min=_LOG_FLOOR))
    return 1.0 - torch.exp(delta @ log_keep)


@dataclass
class SnapshotPairs:
    delta: np.ndarray   # (P, V) newly infected at the current observation
    current: np.ndarray  # (P, V) Y^{s_j}
    target: np.ndarray  # (P, V) Y^{s_{j+1}}

    def __len__(self):
        return len(self.delta)


def snapshot_pairs(episodes) -> SnapshotPairs:
    """Consecutive available observations of every episode.

    The observation before the first one is taken as all-zero.
    """
    delta, cur, tgt = [], [], []
    for ep in episodes:
        states = ep.states()
        prev = np.zeros_like(states[0])
        for j in range(len(states) - 1):
            delta.append(np.clip(states[j] - prev, 0.0, 1.0))
            cur.append(states[j])
            tgt.append(states[j + 1])
            prev = states[j]
    if not delta:
        raise ValueError("no usable snapshot pairs: every episode needs two available snapshots")
    return SnapshotPairs(np.array(delta), np.array(cur), np.array(tgt))


def edge_features(g: Graph, pairs: SnapshotPairs) -> np.ndarray:
    """Inputs of the edge MLP, one row per directed edge ``u -> v``.

    Columns: scaled log-degree of ``u`` and of ``v``; how often ``u`` was
    newly infected while ``v`` was susceptible; the fraction of those
    exposures after which ``v`` was infected; how often ``u`` and ``v`` were
    infected in the same observation.
    """
    src, dst = g.directed_edges.T
    deg = np.log1p(g.degree) / math.log1p(max(int(g.degree.max()), 1))
    d, c, t = pairs.delta, pairs.current, pairs.target
    p = len(pairs)
    exposed = d[:, src] * (1.0 - c[:, dst])
    n_exposed = exposed.sum(0)
    hit = (exposed * t[:, dst]).sum(0)
    coinf = (c[:, src] * c[:, dst]).sum(0)
    return np.stack([
        deg[src], deg[dst],
        n_exposed / p,
        np.where(n_exposed > 0, hit / np.maximum(n_exposed, 1.0), 0.0),
        coinf / p,
    ], axis=1)


class EdgeMLP(nn.Module):
    def __init__(self, n_features, hidden, init_low, init_high):
        super().__init__()
        self.inner = nn.Linear(n_features, hidden)
        self.outer = nn.Linear(hidden, 1)
        with torch.no_grad():
            # start near the prior: outputs ~ U(init_low, init_high)
            self.outer.weight.mul_(0.01)
            self.outer.bias.uniform_(init_low, init_high)

    def forward(self, x):
        return self.outer(torch.tanh(self.inner(x))).squeeze(-1)


class InfluenceModel(nn.Module):
    """Learnable influence matrix, either free per-edge or MLP-generated."""

    def __init__(self, g: Graph, cfg: EstimatorConfig, features=None):
        super().__init__()
        self.n = g.node_count
        self.cfg = cfg
        src, dst = g.directed_edges.T
        self.register_buffer("src", torch.as_tensor(src), persistent=False)
        self.register_buffer("dst", torch.as_tensor(dst), persistent=False)
        self.register_buffer("mask", torch.as_tensor(g.adjacency, dtype=torch.float64),
                             persistent=False)
        if cfg.parametrization == "free":
            theta = torch.empty(self.n, self.n, dtype=torch.float64)
            theta.uniform_(cfg.init_low, cfg.init_high)
            self.theta = nn.Parameter(theta * self.mask)
            self.mlp = None
        else:
            self.theta = None
            self.mlp = EdgeMLP(features.shape[1], cfg.hidden, cfg.init_low, cfg.init_high).double()
            self.register_buffer("features", torch.as_tensor(features, dtype=torch.float64),
                                 persistent=False)

    def forward(self) -> torch.Tensor:
        if self.theta is not None:
            return self.theta.abs() * self.mask
        w = torch.zeros(self.n, self.n, dtype=torch.float64)
        return w.index_put((self.src, self.dst), self.mlp(self.features).abs())

    def zero_non_edge_grads(self):
        if self.theta is not None and self.theta.grad is not None:
            self.theta.grad.mul_(self.mask)


def influence_objective(w: torch.Tensor, pairs: SnapshotPairs, target="susceptible"):
    """Mean squared error of the next-state map over the scored entries."""
    delta = torch.as_tensor(pairs.delta, dtype=w.dtype)
    y = torch.as_tensor(pairs.target, dtype=w.dtype)
    pred = predict_next_state_batch(w, delta)
    if target == "susceptible":
        keep = 1.0 - torch.as_tensor(pairs.current, dtype=w.dtype)
        return ((pred - y) ** 2 * keep).sum() / torch.clamp(keep.sum(), min=1.0)
    return ((pred - y) ** 2).mean()


def fit_influence(g: Graph, episodes, cfg: EstimatorConfig | None = None, on_step=None):
    """Fit the influence matrix to the episodes' snapshot pairs.

    Returns ``(InfluenceMatrix, loss_history)``. The result is projected
    onto ``[0, 1]`` on the edge set. ``on_step`` receives the current dense
    influence values after every optimiser step.
    """
    cfg = cfg or EstimatorConfig()
    pairs = snapshot_pairs(episodes)
    if pairs.delta.shape[1] != g.node_count:
        raise ValueError("episodes do not belong to this graph")
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        feats = edge_features(g, pairs) if cfg.parametrization == "mlp" else None
        model = InfluenceModel(g, cfg, feats)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    history, best, stale = [], math.inf, 0
    for _ in range(cfg.epochs):
        opt.zero_grad()
        loss = influence_objective(model(), pairs, cfg.target)
        if not torch.isfinite(loss):
            raise RuntimeError(f"influence fit diverged after {len(history)} epochs: {history[-5:]}")
        loss.backward()
        model.zero_non_edge_grads()
        opt.step()
        if model.theta is not None:
            with torch.no_grad():
                model.theta.mul_(model.mask)
        history.append(loss.item())
        if on_step is not None:
            with torch.no_grad():
                on_step(model().numpy().copy())
        if best - history[-1] > cfg.tolerance:
            best, stale = history[-1], 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    with torch.no_grad():
        values = torch.clamp(model(), 0.0, 1.0).numpy().copy()
    values[~g.adjacency] = 0.0
    return InfluenceMatrix(values, g.adjacency.copy(), g.checksum), history
