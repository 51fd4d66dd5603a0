"""Composite loss, cross-validated training, ablations and transfer."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from tgasi import __version__
from tgasi.decoder import DecoderConfig, select_sources
from tgasi.encoder import ABLATIONS, EncoderConfig
from tgasi.evaluation import baseline_reports, evaluate_sets
from tgasi.graph import Graph
from tgasi.influence import EstimatorConfig, InfluenceMatrix, fit_influence
from tgasi.model import TGASI, build_model

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOSSES = ("full", "E->M", "no-MSE", "no-G")
_EPS = 1e-12


@dataclass
class TrainConfig:
    folds: int = 10
    epochs: int = 50
    patience: int = 5
    learning_rate: float = 3e-2
    batch_size: int = 16
    seed: int = 0
    ablation: str = "none"
    loss: str = "full"
    graph_loss_form: str = "balanced"  # "balanced" or "literal"
    max_folds: int | None = None  # run only the first k folds
    split_seed: int | None = None  # None -> seed; fix it to vary init on one split

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")
        if self.patience < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs, patience and batch_size must be positive")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss selector {self.loss!r}")
        if self.graph_loss_form not in ("balanced", "literal"):
            raise ValueError(f"unknown graph loss form {self.graph_loss_form!r}")


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def to_dict(self) -> dict:
        return {"train": asdict(self.train), "encoder": asdict(self.encoder),
                "decoder": asdict(self.decoder), "estimator": asdict(self.estimator)}

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = d or {}
        unknown = set(d) - {"train", "encoder", "decoder", "estimator"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        return cls(train=TrainConfig(**d.get("train", {})),
                   encoder=EncoderConfig(**d.get("encoder", {})),
                   decoder=DecoderConfig(**d.get("decoder", {})),
                   estimator=EstimatorConfig(**d.get("estimator", {})))

    def replace(self, **sections) -> "ExperimentConfig":
        d = self.to_dict()
        for name, values in sections.items():
            d[name].update(values)
        return ExperimentConfig.from_dict(d)


@dataclass
class LossBreakdown:
    entropy: torch.Tensor
    mse: torch.Tensor
    graph: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict:
        return {k: getattr(self, k).item() for k in ("entropy", "mse", "graph", "total")}


def aggregate_scores(probs: torch.Tensor, how: str = "mean") -> torch.Tensor:
    return probs[:, -1, :, 1] if how == "last" else probs[..., 1].mean(dim=1)


def compute_loss(r_hot: torch.Tensor, probs: torch.Tensor, h1: torch.Tensor,
                 selector: str = "full", graph_form: str = "balanced",
                 aggregate: str = "mean") -> LossBreakdown:
    """Entropy + encoder MSE + class-balanced graph term, averaged over the batch.

    ``r_hot``: (B, V) true-source indicator. ``probs``: (B, zeta, V, 2) class
    distributions. ``h1``: (B, zeta, V) coarse source scores.
    """
    if selector not in LOSSES:
        raise ValueError(f"unknown loss selector {selector!r}")
    for name, t in (("r_hot", r_hot), ("probs", probs), ("h1", h1)):
        if not torch.all(torch.isfinite(t)):
            raise ValueError(f"non-finite values in {name}")
    score = aggregate_scores(probs, aggregate)
    if selector == "E->M":
        entropy = ((score - r_hot) ** 2).mean(dim=1)
    else:
        s = score.clamp(_EPS, 1.0 - _EPS)
        entropy = -(r_hot * torch.log(s) + (1.0 - r_hot) * torch.log(1.0 - s)).mean(dim=1)
    mse = ((h1 - r_hot[:, None, :]) ** 2).mean(dim=(1, 2))
    rho = r_hot.sum(dim=1) / r_hot.shape[1]
    if graph_form == "balanced":
        graph = (rho * ((1.0 - r_hot) * score).sum(1)
                 + (1.0 - rho) * (r_hot * (1.0 - score)).sum(1))
    else:
        graph = (rho * ((1.0 - r_hot) * (1.0 - score)).sum(1)
                 + (1.0 - rho) * (r_hot * score).sum(1))
    zero = torch.zeros_like(entropy)
    if selector == "no-MSE":
        mse = zero
    elif selector == "no-G":
        graph = zero
    entropy, mse, graph = entropy.mean(), mse.mean(), graph.mean()
    return LossBreakdown(entropy, mse, graph, entropy + mse + graph)


def kfold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    if n < folds:
        raise ValueError(f"{n} episodes cannot fill {folds} folds")
    perm = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,))).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class EpisodeTensors:
    """Episodes grouped by snapshot count, as dense tensors."""

    def __init__(self, episodes, n):
        self.n = n
        self.zeta = np.array([ep.zeta for ep in episodes])
        self.states = [torch.as_tensor(ep.states()) for ep in episodes]
        self.truth = torch.as_tensor(np.stack([ep.source_vector(n) for ep in episodes]))
        self.sources = [ep.sources for ep in episodes]

    def batches(self, idx, batch_size, rng=None):
        idx = np.asarray(idx)
        if rng is not None:
            idx = idx[rng.permutation(len(idx))]
        out = []
        for z in sorted(set(self.zeta[idx].tolist())):
            part = idx[self.zeta[idx] == z]
            out += [part[i:i + batch_size] for i in range(0, len(part), batch_size)]
        if rng is not None:
            out = [out[i] for i in rng.permutation(len(out))]
        return out

    def batch(self, b):
        return torch.stack([self.states[i] for i in b]), self.truth[b]


def _loss_on(model, data, idx, cfg: TrainConfig, agg, batch_size=256):
    total, count = 0.0, 0
    model.eval()
    with torch.no_grad():
        for b in data.batches(idx, batch_size):
            y, r = data.batch(b)
            out = model(y)
            lb = compute_loss(r, out["probs"], out["h1"], cfg.loss, cfg.graph_loss_form, agg)
            total += float(lb.total) * len(b)
            count += len(b)
    return total / max(count, 1)


def predict_scores(model: TGASI, data: EpisodeTensors, idx) -> dict[int, np.ndarray]:
    model.eval()
    scores = {}
    with torch.no_grad():
        for b in data.batches(idx, 256):
            y, _ = data.batch(b)
            s = model(y)["scores"].numpy()
            scores.update({int(i): s[k] for k, i in enumerate(b)})
    return scores


def evaluate_model(model: TGASI, g: Graph, data: EpisodeTensors, idx):
    scores = predict_scores(model, data, idx)
    truths = [data.sources[i] for i in idx]
    preds = [select_sources(scores[int(i)], len(data.sources[i])) for i in idx]
    return evaluate_sets(g, truths, preds)


def fit_fold(model: TGASI, data: EpisodeTensors, train_idx, val_idx, cfg: TrainConfig,
             seed: int, agg: str = "mean"):
    """Adam with early stopping on validation total loss.

    Returns the history; ``model`` is left holding the best-validation weights.
    """
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(seed)
    best, best_state, best_epoch, stale = math.inf, None, 0, 0
    history = {"train": [], "val": [], "terms": [], "stop_epoch": 0, "best_epoch": 0}
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        run, count, terms = 0.0, 0, np.zeros(3)
        for b in data.batches(train_idx, cfg.batch_size, rng):
            y, r = data.batch(b)
            out = model(y)
            lb = compute_loss(r, out["probs"], out["h1"], cfg.loss, cfg.graph_loss_form, agg)
            if not torch.isfinite(lb.total):
                raise RuntimeError(f"training diverged at epoch {epoch}: {history}")
            opt.zero_grad()
            lb.total.backward()
            opt.step()
            run += lb.total.item() * len(b)
            terms += np.array([lb.entropy.item(), lb.mse.item(), lb.graph.item()]) * len(b)
            count += len(b)
        val = _loss_on(model, data, val_idx, cfg, agg)
        history["train"].append(run / count)
        history["terms"].append((terms / count).tolist())
        history["val"].append(val)
        if val < best:
            best, best_epoch, stale = val, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
        history["stop_epoch"] = epoch
        if stale >= cfg.patience:
            break
    history["best_epoch"] = best_epoch
    history["best_val"] = best
    model.load_state_dict(best_state)
    return history


@dataclass
class TrainResult:
    model: TGASI
    influence: InfluenceMatrix
    config: ExperimentConfig
    graph: Graph
    folds: list
    metrics: dict
    influence_history: list

    def checkpoint(self) -> dict:
        return make_checkpoint(self.model, self.influence, self.config, self.graph)


def train(dataset, cfg: ExperimentConfig | None = None, influence: InfluenceMatrix | None = None
          ) -> TrainResult:
    """Fit the influence matrix, then train and test on k-fold splits.

    Fold ``k`` is the test set, fold ``k+1`` the early-stopping validation
    set and the rest the training set. Reported metrics are averaged over
    the folds that ran; the returned model is the one with the lowest
    validation loss.
    """
    cfg = cfg or ExperimentConfig()
    tc = cfg.train
    g = dataset.graph
    episodes = dataset.episodes
    if not episodes:
        raise ValueError("dataset is empty")
    inf_history = []
    if influence is None:
        influence, inf_history = fit_influence(g, episodes, cfg.estimator)
    data = EpisodeTensors(episodes, g.node_count)
    folds = kfold_indices(len(episodes), tc.folds,
                          tc.seed if tc.split_seed is None else tc.split_seed)
    n_run = min(tc.max_folds or tc.folds, tc.folds)
    fold_results, best_val, best_model = [], math.inf, None
    agg = cfg.decoder.aggregate
    for k in range(n_run):
        test_idx, val_idx = folds[k], folds[(k + 1) % tc.folds]
        train_idx = np.sort(np.concatenate([folds[i] for i in range(tc.folds)
                                            if i not in (k, (k + 1) % tc.folds)]))
        if len(train_idx) == 0 or len(val_idx) == 0:
            raise ValueError("fold too small")
        model = build_model(g, influence, cfg.encoder, cfg.decoder, tc.ablation, seed=tc.seed + k)
        hist = fit_fold(model, data, train_idx, val_idx, tc, seed=tc.seed * 1000 + k, agg=agg)
        report = evaluate_model(model, g, data, test_idx)
        base = baseline_reports(g, [episodes[i] for i in test_idx], seed=tc.seed)
        fold_results.append({
            "fold": k, "metrics": report.summary(), "history": hist,
            "baselines": {name: r.summary() for name, r in base.items()},
            "test": test_idx.tolist(),
        })
        log.info("fold %d: f1=%.4f aed=%.4f stop=%d", k, report.f1, report.aed, hist["stop_epoch"])
        if hist["best_val"] < best_val:
            best_val, best_model = hist["best_val"], model
    metrics = summarize_folds(fold_results)
    return TrainResult(best_model, influence, cfg, g, fold_results, metrics, inf_history)


def summarize_folds(folds: list) -> dict:
    mean = lambda key, src="metrics": float(np.mean([f[src][key] for f in folds]))
    out = {
        "f1": mean("f1"), "aed": mean("aed"), "precision": mean("precision"),
        "recall": mean("recall"), "folds": len(folds),
        "stop_epochs": [f["history"]["stop_epoch"] for f in folds],
        "best_epochs": [f["history"]["best_epoch"] for f in folds],
    }
    for name in ("degree", "random"):
        out[f"{name}_f1"] = float(np.mean([f["baselines"][name]["f1"] for f in folds]))
        out[f"{name}_aed"] = float(np.mean([f["baselines"][name]["aed"] for f in folds]))
    return out


def run_ablation(dataset, variant: str, cfg: ExperimentConfig | None = None,
                 influence=None) -> TrainResult:
    if variant not in ABLATIONS or variant == "none":
        raise ValueError(f"unknown ablation variant {variant!r}")
    cfg = (cfg or ExperimentConfig()).replace(train={"ablation": variant})
    return train(dataset, cfg, influence)


def make_checkpoint(model: TGASI, influence: InfluenceMatrix, cfg: ExperimentConfig,
                    g: Graph) -> dict:
    rows, cols = np.nonzero(influence.edge_mask)
    return {
        "version": CHECKPOINT_VERSION,
        "generator": f"tgasi {__version__}",
        "config": cfg.to_dict(),
        "ablation": model.ablation,
        "topology_width": model.encoder.width,
        "graph": g.to_dict(),
        "influence": {"rows": rows.tolist(), "cols": cols.tolist(),
                      "values": influence.values[rows, cols].tolist()},
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }


def save_checkpoint(ckpt: dict, path):
    from tgasi.io import atomic_write_bytes
    import io

    buf = io.BytesIO()
    torch.save(ckpt, buf)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path) -> dict:
    ckpt = torch.load(Path(path), map_location="cpu", weights_only=False)
    if ckpt.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"incompatible checkpoint version {ckpt.get('version')!r}")
    return ckpt


def _checkpoint_influence(ckpt, g: Graph) -> InfluenceMatrix:
    n = g.node_count
    values = np.zeros((n, n))
    inf = ckpt["influence"]
    values[inf["rows"], inf["cols"]] = inf["values"]
    return InfluenceMatrix(values, g.adjacency.copy(), g.checksum)


def model_from_checkpoint(ckpt: dict, g: Graph | None = None, influence=None) -> TGASI:
    """Rebuild the trained model, optionally re-bound to another graph."""
    cfg = ExperimentConfig.from_dict(ckpt["config"])
    src_graph = Graph.from_dict(ckpt["graph"])
    g = g or src_graph
    if influence is None:
        if g.checksum != src_graph.checksum:
            raise ValueError("checkpoint graph differs; pass a re-fitted influence matrix")
        influence = _checkpoint_influence(ckpt, g)
    model = build_model(g, influence, cfg.encoder, cfg.decoder, ckpt["ablation"],
                        topology_width=ckpt["topology_width"])
    enc_state = {k[len("encoder."):]: v for k, v in ckpt["state_dict"].items()
                 if k.startswith("encoder.")}
    dec_state = {k[len("decoder."):]: v for k, v in ckpt["state_dict"].items()
                 if k.startswith("decoder.")}
    model.encoder.load_transferable(enc_state)
    model.decoder.load_state_dict(dec_state)
    model.eval()
    return model


def _report(model, g, episodes, seed=0) -> dict:
    data = EpisodeTensors(episodes, g.node_count)
    idx = np.arange(len(episodes))
    rep = evaluate_model(model, g, data, idx)
    base = baseline_reports(g, episodes, seed=seed)
    out = rep.summary()
    for name, r in base.items():
        out[f"{name}_f1"], out[f"{name}_aed"] = r.f1, r.aed
    out["per_episode"] = rep.per_episode
    return out


def evaluate_checkpoint(ckpt: dict, dataset) -> dict:
    """Native evaluation with the stored influence matrix."""
    model = model_from_checkpoint(ckpt, dataset.graph)
    return _report(model, dataset.graph, dataset.episodes)


def transfer_evaluate(ckpt: dict, dataset) -> dict:
    """Evaluate a trained checkpoint on another graph or propagation model.

    The influence matrix is re-fitted on the target snapshots with the
    checkpoint's estimator settings; encoder and decoder weights stay frozen.
    """
    cfg = ExperimentConfig.from_dict(ckpt["config"])
    influence, _ = fit_influence(dataset.graph, dataset.episodes, cfg.estimator)
    model = model_from_checkpoint(ckpt, dataset.graph, influence)
    return _report(model, dataset.graph, dataset.episodes)


def gradient_check(model: TGASI, y: torch.Tensor, r_hot: torch.Tensor, count: int = 5,
                   eps: float = 1e-6, seed: int = 0, selector: str = "full") -> list[dict]:
    """Compare autograd with central differences on ``count`` random scalars.

    Runs in eval mode so the power-iteration state stays fixed between the
    perturbed forward passes.
    """
    model.eval()

    def loss():
        out = model(y)
        return compute_loss(r_hot, out["probs"], out["h1"], selector).total

    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    model.zero_grad()
    loss().backward()
    rng = np.random.default_rng(seed)
    rows = []
    for k in rng.choice(len(params), size=count, replace=len(params) < count):
        name, p = params[k]
        flat = int(rng.integers(p.numel()))
        idx = np.unravel_index(flat, p.shape)
        analytic = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + eps
            up = loss().item()
            p[idx] = orig - eps
            down = loss().item()
            p[idx] = orig
        numeric = (up - down) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        rows.append({"param": name, "index": tuple(int(i) for i in idx),
                     "analytic": analytic, "numeric": numeric, "rel_error": rel})
    return rows
