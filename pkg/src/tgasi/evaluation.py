"""Source-set metrics, sanity baselines and report tables."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from tgasi.graph import Graph, bfs_distances


def f1(truth, predicted) -> tuple[float, float, float]:
    """``(precision, recall, f1)`` of a predicted source set."""
    truth, predicted = set(truth), set(predicted)
    if not truth:
        raise ValueError("truth set is empty")
    hit = len(truth & predicted)
    precision = hit / len(predicted) if predicted else 0.0
    recall = hit / len(truth)
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def distance_matrix(g: Graph, predicted, truth) -> np.ndarray:
    """Hop distances, rows = predicted nodes, columns = true sources."""
    truth = list(truth)
    rows = [bfs_distances(g, int(p))[truth] for p in predicted]
    d = np.asarray(rows, dtype=np.float64).reshape(len(predicted), len(truth))
    if np.any(d < 0):
        raise ValueError("a predicted source is disconnected from a true source")
    return d


def aed(truth, predicted, g: Graph) -> float:
    """Mean hop distance under the best one-to-one matching."""
    truth, predicted = sorted(set(truth)), sorted(set(predicted))
    if len(truth) != len(predicted):
        raise ValueError(f"AED needs equal set sizes, got {len(truth)} and {len(predicted)}")
    if not truth:
        raise ValueError("truth set is empty")
    cost = distance_matrix(g, predicted, truth)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / len(truth))


def degree_baseline(g: Graph, z: int) -> list[int]:
    if not 1 <= z <= g.node_count:
        raise ValueError(f"Z={z} outside 1..{g.node_count}")
    order = np.lexsort((np.arange(g.node_count), -g.degree))
    return sorted(order[:z].tolist())


def random_baseline(g: Graph, z: int, seed) -> list[int]:
    if not 1 <= z <= g.node_count:
        raise ValueError(f"Z={z} outside 1..{g.node_count}")
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(g.node_count, size=z, replace=False).tolist())


@dataclass
class MetricReport:
    f1: float
    precision: float
    recall: float
    aed: float
    episode_count: int
    per_episode: list = field(default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("per_episode")
        return d


def evaluate_sets(g: Graph, truths, predictions) -> MetricReport:
    rows = []
    for t, p in zip(truths, predictions):
        prec, rec, score = f1(t, p)
        rows.append({"precision": prec, "recall": rec, "f1": score, "aed": aed(t, p, g)})
    if not rows:
        raise ValueError("nothing to evaluate")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    return MetricReport(episode_count=len(rows), per_episode=rows, **mean)


def baseline_reports(g: Graph, episodes, seed=0) -> dict[str, MetricReport]:
    truths = [ep.sources for ep in episodes]
    deg = [degree_baseline(g, len(t)) for t in truths]
    rnd = [random_baseline(g, len(t), (seed, ep.episode_id)) for t, ep in zip(truths, episodes)]
    return {"degree": evaluate_sets(g, truths, deg), "random": evaluate_sets(g, truths, rnd)}


def render_table(rows: list[dict], columns: list[str]) -> str:
    """Plain-text table; floats rendered with four decimals."""
    def fmt(v):
        if isinstance(v, float):
            return "nan" if math.isnan(v) else f"{v:.4f}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c)
              for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    sep = "  ".join("-" * w for w in widths)
    body = ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join([line, sep, *body])
