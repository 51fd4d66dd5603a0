"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same outputs; used when the extension is not built or when
``TGASI_PURE_PYTHON`` is set.
"""

import numpy as np


def ic_cascade(indptr, indices, probs, draws, seeds):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    probs = probs.tolist()
    draws = draws.tolist()
    times = [-1] * n
    frontier = []
    for u in seeds.tolist():
        if times[u] < 0:
            times[u] = 0
            frontier.append(u)
    t = 0
    while frontier:
        nxt = []
        for u in frontier:
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if times[v] < 0 and draws[e] < probs[e]:
                    times[v] = t + 1
                    nxt.append(v)
        frontier = nxt
        t += 1
    return np.asarray(times, dtype=np.int64)


def si_cascade(indptr, indices, probs, draws, recovery, recovery_draws,
               seeds, max_steps, sir):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    probs = probs.tolist()
    recovery = recovery.tolist()
    state = [0] * n
    for u in seeds.tolist():
        state[u] = 1
    rows = [list(state)]
    for step in range(max_steps):
        infected = [u for u in range(n) if state[u] == 1]
        if sir:
            live = bool(infected)
        else:
            live = any(state[indices[e]] == 0
                       for u in infected for e in range(indptr[u], indptr[u + 1]))
        if not live:
            break
        row_draws = draws[step].tolist()
        row_rec = recovery_draws[step].tolist() if sir else None
        nxt = list(state)
        for u in infected:
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if state[v] == 0 and row_draws[e] < probs[e]:
                    nxt[v] = 1
            if sir and row_rec[u] < recovery[u]:
                nxt[u] = 2
        state = nxt
        rows.append(list(state))
    return np.asarray(rows, dtype=np.int8)


def bfs_distances(indptr, indices, source):
    n = len(indptr) - 1
    indptr = indptr.tolist()
    indices = indices.tolist()
    dist = [-1] * n
    dist[source] = 0
    queue = [source]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return np.asarray(dist, dtype=np.int64)
