"""Bidirectional GRU decoder with one-timestamp band attention."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

HIDDEN = 2  # per direction; the concatenated state is 4 wide


@dataclass
class DecoderConfig:
    heads: int = 4
    aggregate: str = "mean"  # "mean" over timestamps or "last"
    attention_values: str = "neighbor"  # "neighbor" (phi_ij W^T R_j) or "self" (phi_ij W^T R_i)

    def __post_init__(self):
        if self.heads < 1:
            raise ValueError("need at least one attention head")
        if self.aggregate not in ("mean", "last"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        if self.attention_values not in ("neighbor", "self"):
            raise ValueError(f"unknown attention_values {self.attention_values!r}")

    def to_dict(self):
        return asdict(self)


def band_mask(zeta: int) -> np.ndarray:
    """Boolean (zeta, zeta) mask, true where timestamps are at most one apart."""
    if zeta < 1:
        raise ValueError("zeta must be positive")
    idx = np.arange(zeta)
    return np.abs(idx[:, None] - idx[None, :]) <= 1


class TemporalDecoder(nn.Module):
    def __init__(self, input_size: int, cfg: DecoderConfig | None = None, attention: bool = True):
        super().__init__()
        self.cfg = cfg or DecoderConfig()
        self.gru = nn.GRU(input_size, HIDDEN, batch_first=True, bidirectional=True,
                          dtype=torch.float64)
        self.use_attention = attention
        if attention:
            k = self.cfg.heads
            self.proj = nn.Parameter(torch.empty(k, 2 * HIDDEN, 2, dtype=torch.float64))
            self.att = nn.Parameter(torch.empty(k, 4, dtype=torch.float64))
            for i in range(k):
                nn.init.xavier_uniform_(self.proj.data[i])
            nn.init.uniform_(self.att, -0.5, 0.5)

    def bigru(self, h: torch.Tensor) -> torch.Tensor:
        """(B, zeta, V, F) -> (B, zeta, V, 4) forward/backward hidden states."""
        if h.shape[1] == 0:
            raise ValueError("empty embedding sequence")
        b, z, v, f = h.shape
        x = h.permute(0, 2, 1, 3).reshape(b * v, z, f)
        out, _ = self.gru(x)
        return out.reshape(b, v, z, 2 * HIDDEN).permute(0, 2, 1, 3)

    def attention(self, r: torch.Tensor):
        """Band attention over timestamps.

        Returns class distributions (B, zeta, V, 2) and attention weights
        phi of shape (B, zeta_i, zeta_j, V, heads).
        """
        zeta = r.shape[1]
        proj = torch.einsum("btvf,kfo->btvko", r, self.proj)
        left = torch.einsum("btvko,ko->btvk", proj, self.att[:, :2])
        right = torch.einsum("btvko,ko->btvk", proj, self.att[:, 2:])
        e = F.relu(left[:, :, None] + right[:, None, :])
        band = torch.as_tensor(band_mask(zeta))[None, :, :, None, None]
        e = e.masked_fill(~band, float("-inf"))
        phi = torch.softmax(e, dim=2)
        if self.cfg.attention_values == "neighbor":
            mixed = torch.einsum("bijvk,bjvko->bivko", phi, proj)
        else:
            mixed = phi.sum(dim=2)[..., None] * proj
        logits = F.relu(mixed).mean(dim=3)
        return torch.softmax(logits, dim=-1), phi

    def forward(self, h: torch.Tensor):
        r = self.bigru(h)
        if self.use_attention:
            probs, phi = self.attention(r)
        else:
            probs, phi = torch.softmax(0.5 * (r[..., :HIDDEN] + r[..., HIDDEN:]), dim=-1), None
        return probs, r, phi

    def source_scores(self, probs: torch.Tensor) -> torch.Tensor:
        """Per-node source probability aggregated over timestamps, (B, V)."""
        if self.cfg.aggregate == "last":
            return probs[:, -1, :, 1]
        return probs[..., 1].mean(dim=1)


def select_sources(scores, z: int) -> list[int]:
    """The ``z`` highest-scoring nodes; ties go to the smaller node id."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= z <= len(scores):
        raise ValueError(f"Z={z} outside 1..{len(scores)}")
    order = np.lexsort((np.arange(len(scores)), -scores))
    return sorted(order[:z].tolist())
