"""Per-timestamp node embeddings.

For a snapshot ``y`` the embedding row of node ``v`` is

    [ H1(v) | H2(v) | H3(v) | HG(v, :) ]

* ``H1``: coarse source score, a one-layer graph convolution over the one-hot
  infection state with ``A + I + W`` as the propagation matrix, read out to a
  scalar and added to ``alpha * y``;
* ``H2`` / ``H3``: influence mass from infected / uninfected neighbours,
  divided by the degree;
* ``HG``: static topology embedding, one graph convolution over the identity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from tgasi.graph import Graph, normalized_adjacency

ACTIVATIONS = {"relu": F.relu, "tanh": torch.tanh, "identity": lambda x: x}
ABLATIONS = ("none", "W-", "D-", "S-", "A-")


@dataclass
class EncoderConfig:
    hidden: int = 32
    alpha: float = 1.0
    lipschitz: float = 0.9
    activation: str = "relu"
    topology_width: Optional[int] = None  # None -> ceil(sqrt(|V|))
    power_iterations: int = 5

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden size must be positive")
        if not 0.0 < self.lipschitz < 1.0:
            raise ValueError("Lipschitz bound must lie in (0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.topology_width is not None and self.topology_width < 1:
            raise ValueError("topology width must be at least 1")

    def width_for(self, g: Graph) -> int:
        return self.topology_width or math.ceil(math.sqrt(g.node_count))

    def to_dict(self):
        return asdict(self)


def _influence_values(w, g: Graph) -> np.ndarray:
    values = getattr(w, "values", w)
    if values is None:
        raise ValueError("an influence matrix is required")
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (g.node_count, g.node_count):
        raise ValueError(f"influence matrix shape {values.shape} does not match the graph")
    return values


def _safe_degree(g: Graph) -> np.ndarray:
    # isolated nodes have an empty neighbour sum, so dividing by 1 gives H2 = H3 = 0
    return np.maximum(g.degree, 1).astype(np.float64)


def infected_feature(y, g: Graph, w) -> np.ndarray:
    """Per node, influence towards infected neighbours over the degree."""
    values = _influence_values(w, g)
    y = np.asarray(y, dtype=np.float64)
    return (values * g.adjacency) @ y / _safe_degree(g)


def uninfected_feature(y, g: Graph, w) -> np.ndarray:
    values = _influence_values(w, g)
    y = np.asarray(y, dtype=np.float64)
    return (values * g.adjacency) @ (1.0 - y) / _safe_degree(g)


class FeatureEncoder(nn.Module):
    """Trainable part of the encoder, bound to one graph and influence matrix.

    Graph-derived matrices are non-persistent buffers, so a state dict can be
    loaded into an encoder built for another graph (see
    :meth:`load_transferable`).
    """

    def __init__(self, g: Graph, influence, cfg: EncoderConfig | None = None,
                 ablation: str = "none", topology_width: int | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        if ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {ablation!r}")
        self.cfg = cfg
        self.ablation = ablation
        self.n = g.node_count
        self.width = topology_width or cfg.width_for(g)
        self.act = ACTIVATIONS[cfg.activation]
        values = _influence_values(influence, g) * g.adjacency
        f64 = torch.float64
        self.register_buffer("a_influence", torch.as_tensor(normalized_adjacency(g, values), dtype=f64),
                             persistent=False)
        self.register_buffer("a_plain", torch.as_tensor(normalized_adjacency(g), dtype=f64),
                             persistent=False)
        self.register_buffer("w_dense", torch.as_tensor(values, dtype=f64), persistent=False)
        self.register_buffer("degree", torch.as_tensor(_safe_degree(g), dtype=f64),
                             persistent=False)

        bound = 1.0 / math.sqrt(2.0)
        self.gcn_weight = nn.Parameter(torch.empty(2, cfg.hidden, dtype=f64).uniform_(-bound, bound))
        self.readout = nn.Linear(cfg.hidden, 1, dtype=f64)
        self.topo_weight = nn.Parameter(torch.empty(self.n, self.width, dtype=f64))
        nn.init.xavier_uniform_(self.topo_weight)
        # power-iteration state for the Lipschitz bound on gcn_weight
        u = torch.ones(2, dtype=f64) / math.sqrt(2.0)
        self.register_buffer("_u", u)
        self.register_buffer("_v", F.normalize(u @ self.gcn_weight.detach(), dim=0))
        self._power_iterate(30)

    @torch.no_grad()
    def _power_iterate(self, steps):
        w = self.gcn_weight
        u, v = self._u, self._v
        for _ in range(steps):
            v = F.normalize(u @ w, dim=0)
            u = F.normalize(w @ v, dim=0)
        self._u.copy_(u)
        self._v.copy_(v)

    def spectral_estimate(self) -> torch.Tensor:
        return self._u @ self.gcn_weight @ self._v

    def bounded_weight(self) -> torch.Tensor:
        """``gcn_weight`` rescaled so its spectral norm is at most the bound."""
        if self.training:
            self._power_iterate(self.cfg.power_iterations)
        sigma = self.spectral_estimate()
        bound = self.cfg.lipschitz
        scale = torch.where(sigma > bound, bound / sigma, torch.ones_like(sigma))
        return self.gcn_weight * scale

    def coarse(self, y: torch.Tensor) -> torch.Tensor:
        """H1 for states ``y`` of shape (..., |V|)."""
        x = torch.stack([1.0 - y, y], dim=-1)
        z = self.act(torch.matmul(self.a_influence, x) @ self.bounded_weight())
        return self.readout(z).squeeze(-1) + self.cfg.alpha * y

    def dynamic(self, y: torch.Tensor):
        h2 = (y @ self.w_dense.T) / self.degree
        h3 = ((1.0 - y) @ self.w_dense.T) / self.degree
        return h2, h3

    def topology(self) -> torch.Tensor:
        return self.act(self.a_plain @ self.topo_weight)

    def forward(self, y: torch.Tensor):
        """Return ``(H, H1)``; ``H`` has shape (..., |V|, 3 + width)."""
        h1 = self.coarse(y)
        h2, h3 = self.dynamic(y)
        hg = self.topology().expand(*y.shape, self.width)
        if self.ablation == "W-":
            h1 = torch.zeros_like(h1)
        elif self.ablation == "D-":
            h2, h3 = torch.zeros_like(h2), torch.zeros_like(h3)
        elif self.ablation == "S-":
            hg = torch.zeros_like(hg)
        h = torch.cat([h1.unsqueeze(-1), h2.unsqueeze(-1), h3.unsqueeze(-1), hg], dim=-1)
        return h, h1

    def load_transferable(self, state: dict):
        """Load weights trained on another graph.

        Rows of the topology weight are truncated or zero-padded to this
        graph's node count; the column count must already match.
        """
        state = dict(state)
        topo = state.pop("topo_weight")
        if topo.shape[1] != self.width:
            raise ValueError(f"topology width {topo.shape[1]} != {self.width}")
        rows = min(topo.shape[0], self.n)
        new = torch.zeros(self.n, self.width, dtype=topo.dtype)
        new[:rows] = topo[:rows]
        state["topo_weight"] = new
        self.load_state_dict(state)


def coarse_feature(y, encoder: FeatureEncoder) -> np.ndarray:
    with torch.no_grad():
        return encoder.coarse(torch.as_tensor(np.asarray(y, dtype=np.float64))).numpy()


def topology_feature(encoder: FeatureEncoder) -> np.ndarray:
    with torch.no_grad():
        return encoder.topology().numpy()


@dataclass
class EmbeddingSequence:
    timestamps: list
    matrices: list  # (|V|, 3 + width) per available timestamp

    @property
    def zeta(self) -> int:
        return len(self.matrices)

    def blocks(self, j):
        m = self.matrices[j]
        return m[:, 0], m[:, 1], m[:, 2], m[:, 3:]


def encode_episode(ep, encoder: FeatureEncoder) -> EmbeddingSequence:
    """Encode every available snapshot of ``ep``."""
    states = ep.states()
    if states.shape[1] != encoder.n:
        raise ValueError("episode does not belong to the encoder's graph")
    with torch.no_grad():
        h, _ = encoder(torch.as_tensor(states))
    return EmbeddingSequence([s.timestamp for s in ep.available], list(h.numpy()))
