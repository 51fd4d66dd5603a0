"""IC / SI / SIR propagation, snapshot sampling and dataset generation.

All randomness for an episode comes from one generator seeded with a value
derived from ``(master_seed, episode_index, attempt)``, so datasets are
byte-identical across runs, worker counts and kernel backends.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from tgasi import __version__, kernels
from tgasi.graph import Graph
from tgasi.io import atomic_write_text, dumps

KINDS = ("IC", "SI", "SIR")
DATASET_FORMAT = 1
MAX_ATTEMPTS = 200


class ShortChainError(ValueError):
    """The propagation chain is too short to yield two available snapshots."""


@dataclass(frozen=True)
class PropagationModel:
    """Diffusion model descriptor.

    ``heterogeneous`` draws each directed edge probability from
    ``U(low, high)``; otherwise every edge uses ``p``. SIR recovery is either
    the constant ``recovery_rate`` or, when ``recovery_range`` is set, a
    per-node draw from that interval.
    """

    kind: str = "IC"
    heterogeneous: bool = True
    p: float = 0.1
    low: float = 0.05
    high: float = 0.15
    recovery_rate: float = 0.0
    recovery_range: Optional[tuple] = None
    max_steps: int = 50
    recovered_observed: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown propagation model {self.kind!r}")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.low <= self.high <= 1.0):
            raise ValueError("infection probabilities must satisfy 0 <= low <= high <= 1")
        if not 0.0 <= self.recovery_rate <= 1.0:
            raise ValueError("recovery_rate must lie in [0, 1]")
        if self.kind != "SIR" and (self.recovery_rate or self.recovery_range):
            raise ValueError("recovery is only defined for SIR")
        if self.recovery_range is not None:
            lo, hi = self.recovery_range
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError("recovery_range must satisfy 0 <= low <= high <= 1")
            object.__setattr__(self, "recovery_range", (float(lo), float(hi)))
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["recovery_range"] = list(self.recovery_range) if self.recovery_range else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PropagationModel":
        d = dict(d)
        if d.get("recovery_range") is not None:
            d["recovery_range"] = tuple(d["recovery_range"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Snapshot:
    timestamp: int
    state: np.ndarray  # uint8, 1 = observed infected

    @property
    def infected(self) -> list[int]:
        return np.flatnonzero(self.state).tolist()

    def __eq__(self, other):
        return (isinstance(other, Snapshot) and self.timestamp == other.timestamp
                and np.array_equal(self.state, other.state))

    def __repr__(self):
        return f"Snapshot(t={self.timestamp}, infected={self.infected})"


@dataclass(eq=False)
class Episode:
    episode_id: int
    graph_id: str
    sources: tuple
    available: list
    model: PropagationModel
    seed: int
    chain: Optional[list] = None
    meta: dict = field(default_factory=dict)

    @property
    def zeta(self) -> int:
        return len(self.available)

    def states(self) -> np.ndarray:
        """(zeta, |V|) float array of the available snapshots."""
        return np.stack([s.state for s in self.available]).astype(np.float64)

    def source_vector(self, n: int) -> np.ndarray:
        r = np.zeros(n)
        r[list(self.sources)] = 1.0
        return r

    def to_record(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "graph_id": self.graph_id,
            "model": self.model.to_dict(),
            "seed": self.seed,
            "sources": list(self.sources),
            "available": [{"t": s.timestamp, "infected": s.infected} for s in self.available],
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, rec: dict, node_count: int) -> "Episode":
        available = []
        for s in rec["available"]:
            state = np.zeros(node_count, dtype=np.uint8)
            state[s["infected"]] = 1
            available.append(Snapshot(int(s["t"]), state))
        return cls(episode_id=rec["episode_id"], graph_id=rec["graph_id"],
                   sources=tuple(rec["sources"]), available=available,
                   model=PropagationModel.from_dict(rec["model"]), seed=rec["seed"],
                   meta=rec.get("meta", {}))


@dataclass(eq=False)
class Dataset:
    graph: Graph
    episodes: list
    manifest: dict

    @property
    def edge_probabilities(self) -> np.ndarray:
        return np.asarray(self.manifest["edge_probabilities"])


def episode_seed(master_seed: int, index: int, attempt: int = 0) -> int:
    """Stable 64-bit seed for one episode attempt."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(1, int(index), int(attempt)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


def edge_probabilities(g: Graph, model: PropagationModel, seed) -> np.ndarray:
    """Per directed edge (CSR order) infection probability."""
    nnz = len(g.csr[1])
    if model.heterogeneous:
        return _rng(seed).uniform(model.low, model.high, size=nnz)
    return np.full(nnz, model.p)


def recovery_rates(g: Graph, model: PropagationModel, seed) -> np.ndarray:
    if model.kind != "SIR":
        return np.zeros(g.node_count)
    if model.recovery_range is not None:
        return _rng(seed).uniform(*model.recovery_range, size=g.node_count)
    return np.full(g.node_count, model.recovery_rate)


def _check_sources(g, sources):
    sources = np.unique(np.asarray(list(sources), dtype=np.int64))
    if sources.size == 0:
        raise ValueError("source set is empty")
    if sources.min() < 0 or sources.max() >= g.node_count:
        raise IndexError("source id out of range")
    return sources


def simulate(g: Graph, model: PropagationModel, sources, seed,
             edge_probs=None, recovery=None) -> list[Snapshot]:
    """Run one propagation and return the full snapshot chain.

    Snapshot 0 holds exactly the sources. IC stops once a step adds no new
    infection; SI stops when no susceptible node touches an infected one;
    SIR stops when nobody is infected. SI/SIR are capped at
    ``model.max_steps`` steps. Recovered nodes are observed as 0 unless
    ``model.recovered_observed``.
    """
    sources = _check_sources(g, sources)
    rng = _rng(seed)
    if edge_probs is None:
        edge_probs = edge_probabilities(g, model, rng)
    indptr, indices = g.csr
    nnz = len(indices)
    if model.kind == "IC":
        draws = rng.random(nnz)
        times = kernels.ic_cascade(indptr, indices, edge_probs, draws, sources)
        last = int(times.max())
        return [Snapshot(t, ((times >= 0) & (times <= t)).astype(np.uint8))
                for t in range(last + 1)]
    sir = model.kind == "SIR"
    if recovery is None:
        recovery = recovery_rates(g, model, rng)
    draws = rng.random((model.max_steps, nnz))
    if sir:
        rdraws = rng.random((model.max_steps, g.node_count))
    else:
        rdraws = np.zeros((model.max_steps, g.node_count))
    states = kernels.si_cascade(indptr, indices, edge_probs, draws, recovery, rdraws,
                                sources, model.max_steps, sir)
    observed = (states == 1) | ((states == 2) & model.recovered_observed)
    return [Snapshot(t, observed[t].astype(np.uint8)) for t in range(len(states))]


def sample_available(chain: list, n_prime: int, seed) -> list[Snapshot]:
    """Pick ``n_prime`` distinct snapshots uniformly, sorted by timestamp.

    A chain with at most ``n_prime`` snapshots falls back to every snapshot
    but the last; :class:`ShortChainError` if that leaves fewer than two.
    """
    if n_prime < 2:
        raise ValueError("n_prime must be at least 2")
    if len(chain) <= n_prime:
        if len(chain) < 3:
            raise ShortChainError(f"chain of length {len(chain)} cannot give two snapshots")
        return list(chain[:-1])
    idx = np.sort(_rng(seed).choice(len(chain), size=n_prime, replace=False))
    return [chain[i] for i in idx]


def source_count(g: Graph, source_fraction: float) -> int:
    # tolerance keeps e.g. 0.1 * 30 from rounding up to 4
    return max(1, math.ceil(source_fraction * g.node_count - 1e-9))


def _make_episode(args):
    g, model, index, k, n_prime, master_seed, edge_probs, recovery, candidates, graph_id = args
    for attempt in range(MAX_ATTEMPTS):
        seed = episode_seed(master_seed, index, attempt)
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(candidates, size=k, replace=False))
        chain = simulate(g, model, sources, rng, edge_probs=edge_probs, recovery=recovery)
        try:
            available = sample_available(chain, n_prime, rng)
        except ShortChainError:
            continue
        meta = {"attempt": attempt, "chain_length": len(chain),
                "fallback": len(chain) <= n_prime}
        return Episode(episode_id=index, graph_id=graph_id, sources=tuple(sources.tolist()),
                       available=available, model=model, seed=seed, chain=chain, meta=meta)
    raise RuntimeError(
        f"episode {index}: no chain long enough after {MAX_ATTEMPTS} attempts; "
        "raise the infection probabilities or lower n_prime")


def generate_dataset(g: Graph, model: PropagationModel, episode_count: int,
                     source_fraction: float = 0.1, n_prime: int = 3,
                     master_seed: int = 0, workers: int = 1) -> Dataset:
    """Simulate ``episode_count`` independent episodes on ``g``.

    Each episode draws ``ceil(source_fraction * |V|)`` sources uniformly from
    the largest connected component. The hidden per-edge probabilities are
    drawn once per dataset from ``master_seed`` and recorded in the manifest.
    Episodes whose chain is too short are redrawn with the next attempt seed.
    """
    if not 0.0 < source_fraction < 1.0:
        raise ValueError("source_fraction must lie in (0, 1)")
    k = source_count(g, source_fraction)
    candidates = g.largest_component()
    if k >= g.node_count or k > len(candidates):
        raise ValueError(f"{k} sources do not fit in the largest component ({len(candidates)} nodes)")
    param_rng = np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(0,)))
    edge_probs = edge_probabilities(g, model, param_rng)
    recovery = recovery_rates(g, model, param_rng)
    graph_id = f"{g.name}:{g.checksum[:12]}"
    jobs = [(g, model, i, k, n_prime, master_seed, edge_probs, recovery, candidates, graph_id)
            for i in range(episode_count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(_make_episode, jobs, chunksize=16))
    else:
        episodes = [_make_episode(j) for j in jobs]
    manifest = {
        "format": DATASET_FORMAT,
        "generator": f"tgasi {__version__}",
        "graph": g.to_dict(),
        "config": {
            "model": model.to_dict(),
            "episode_count": episode_count,
            "source_fraction": source_fraction,
            "source_count": k,
            "n_prime": n_prime,
            "master_seed": int(master_seed),
        },
        "observation": ("recovered nodes observed as infected" if model.recovered_observed
                        else "recovered nodes observed as uninfected"),
        "edge_probabilities": edge_probs.tolist(),
        "recovery_rates": recovery.tolist() if model.kind == "SIR" else None,
    }
    return Dataset(graph=g, episodes=episodes, manifest=manifest)


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_dataset(path, dataset: Dataset):
    lines = [dumps(ep.to_record()) for ep in dataset.episodes]
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(manifest_path(path), dumps(dataset.manifest) + "\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    mpath = manifest_path(path)
    if not path.exists() or not mpath.exists():
        raise FileNotFoundError(f"dataset {path} or its manifest {mpath} is missing")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"unsupported dataset format {manifest.get('format')!r}")
    g = Graph.from_dict(manifest["graph"])
    episodes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                episodes.append(Episode.from_record(json.loads(line), g.node_count))
    return Dataset(graph=g, episodes=episodes, manifest=manifest)
