"""Encoder + decoder assembled into one trainable module."""

from __future__ import annotations

import torch
from torch import nn

from tgasi.decoder import DecoderConfig, TemporalDecoder
from tgasi.encoder import EncoderConfig, FeatureEncoder
from tgasi.graph import Graph


class TGASI(nn.Module):
    def __init__(self, g: Graph, influence, enc_cfg: EncoderConfig | None = None,
                 dec_cfg: DecoderConfig | None = None, ablation: str = "none",
                 topology_width: int | None = None):
        super().__init__()
        self.encoder = FeatureEncoder(g, influence, enc_cfg, ablation=ablation,
                                      topology_width=topology_width)
        self.decoder = TemporalDecoder(3 + self.encoder.width, dec_cfg,
                                       attention=ablation != "A-")
        self.ablation = ablation

    def forward(self, y: torch.Tensor) -> dict:
        """``y``: (B, zeta, |V|) observed states."""
        h, h1 = self.encoder(y)
        probs, r, phi = self.decoder(h)
        return {"probs": probs, "h1": h1, "scores": self.decoder.source_scores(probs),
                "embedding": h, "rhat": r, "phi": phi}


def build_model(g: Graph, influence, enc_cfg=None, dec_cfg=None, ablation="none",
                seed: int = 0, topology_width=None) -> TGASI:
    """Construct a model with parameters drawn from ``seed`` only."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return TGASI(g, influence, enc_cfg, dec_cfg, ablation, topology_width)
