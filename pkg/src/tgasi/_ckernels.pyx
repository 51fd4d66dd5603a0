# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cascade and BFS kernels.

Every random decision is read from caller-supplied uniform draws, so the
output is bit-identical to :mod:`tgasi._pykernels` for the same inputs.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ic_cascade(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] probs, const double[::1] draws,
               const cnp.int64_t[::1] seeds):
    """Infection time per node under independent cascade, -1 if never."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.int64_t[::1] times = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] frontier = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] nxt = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] tmp
    cdef Py_ssize_t nf = 0, nn, i, k, e
    cdef cnp.int64_t u, v, t = 0
    for i in range(seeds.shape[0]):
        u = seeds[i]
        if times[u] < 0:
            times[u] = 0
            frontier[nf] = u
            nf += 1
    while nf > 0:
        nn = 0
        for i in range(nf):
            u = frontier[i]
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if times[v] < 0 and draws[e] < probs[e]:
                    times[v] = t + 1
                    nxt[nn] = v
                    nn += 1
        tmp = frontier
        frontier = nxt
        nxt = tmp
        nf = nn
        t += 1
    return np.asarray(times)


def si_cascade(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double[::1] probs, const double[:, ::1] draws,
               const double[::1] recovery, const double[:, ::1] recovery_draws,
               const cnp.int64_t[::1] seeds, int max_steps, bint sir):
    """State per step (0 susceptible, 1 infected, 2 recovered) under SI/SIR.

    Returns an int8 array of shape (steps + 1, n); row 0 holds the seeds.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.int8_t[:, ::1] out = np.zeros((max_steps + 1, n), dtype=np.int8)
    cdef Py_ssize_t i, e, step = 0
    cdef cnp.int64_t u, v
    cdef bint live
    for i in range(seeds.shape[0]):
        out[0, seeds[i]] = 1
    while step < max_steps:
        live = False
        for u in range(n):
            if out[step, u] != 1:
                continue
            if sir:
                live = True
                break
            for e in range(indptr[u], indptr[u + 1]):
                if out[step, indices[e]] == 0:
                    live = True
                    break
            if live:
                break
        if not live:
            break
        for u in range(n):
            out[step + 1, u] = out[step, u]
        for u in range(n):
            if out[step, u] != 1:
                continue
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                if out[step, v] == 0 and draws[step, e] < probs[e]:
                    out[step + 1, v] = 1
            if sir and recovery_draws[step, u] < recovery[u]:
                out[step + 1, u] = 2
        step += 1
    return np.asarray(out[:step + 1]).copy()


def bfs_distances(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                  cnp.int64_t source):
    """Hop distance from ``source`` to every node, -1 if unreachable."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.int64_t[::1] dist = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, e
    cdef cnp.int64_t u, v
    dist[source] = 0
    queue[tail] = source
    tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue[tail] = v
                tail += 1
    return np.asarray(dist)
