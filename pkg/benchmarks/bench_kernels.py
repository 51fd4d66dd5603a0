"""Compare the compiled and pure-Python kernels on the bundled graphs.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; the script checks
that outputs agree exactly before reporting timings.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from tgasi import _pykernels
from tgasi.graph import load_edge_list

try:
    from tgasi import _ckernels
except ImportError:  # extension not built
    _ckernels = None

DATA = Path(__file__).resolve().parents[1] / "data"


def cases(g, rng):
    indptr, indices = g.csr
    nnz, n = len(indices), g.node_count
    probs = rng.uniform(0.05, 0.15, nnz)
    seeds = np.sort(rng.choice(n, size=max(1, n // 10), replace=False)).astype(np.int64)
    steps = 50
    ic_draws = rng.random(nnz)
    si_draws = rng.random((steps, nnz))
    recovery = np.full(n, 0.02)
    rec_draws = rng.random((steps, n))
    return {
        "ic_cascade": lambda k: k.ic_cascade(indptr, indices, probs, ic_draws, seeds),
        "si_cascade": lambda k: k.si_cascade(indptr, indices, probs, si_draws, recovery,
                                             rec_draws, seeds, steps, False),
        "sir_cascade": lambda k: k.si_cascade(indptr, indices, probs, si_draws, recovery,
                                              rec_draws, seeds, steps, True),
        "bfs_all_sources": lambda k: [k.bfs_distances(indptr, indices, s) for s in range(n)],
    }


def timed(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def same(a, b):
    if isinstance(a, list):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json")
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    rows = []
    for name in ("karate.txt", "jazz_surrogate.txt"):
        g = load_edge_list(DATA / name)
        for kernel, fn in cases(g, np.random.default_rng(0)).items():
            t_py, out_py = timed(lambda: fn(_pykernels), args.repeat)
            t_c, out_c = timed(lambda: fn(_ckernels), args.repeat)
            if not same(out_py, out_c):
                raise SystemExit(f"{kernel} on {name}: backends disagree")
            rows.append({"graph": g.name, "kernel": kernel, "python_s": t_py,
                         "cython_s": t_c, "speedup": t_py / t_c})
    print(f"{'graph':<16}{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['graph']:<16}{r['kernel']:<18}{r['python_s'] * 1e3:>12.3f}"
              f"{r['cython_s'] * 1e3:>12.3f}{r['speedup']:>9.1f}x")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
