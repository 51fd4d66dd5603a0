"""Backend selection for the hot simulation and BFS loops.

The compiled extension is used when it imports; set ``TGASI_PURE_PYTHON=1``
to force the pure-Python implementation.
"""

import os

import numpy as np

from tgasi import _pykernels

if os.environ.get("TGASI_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from tgasi import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def ic_cascade(indptr, indices, probs, draws, seeds, impl=None):
    impl = impl or _impl
    return impl.ic_cascade(_i64(indptr), _i64(indices), _f64(probs), _f64(draws), _i64(seeds))


def si_cascade(indptr, indices, probs, draws, recovery, recovery_draws, seeds,
               max_steps, sir, impl=None):
    impl = impl or _impl
    return impl.si_cascade(_i64(indptr), _i64(indices), _f64(probs), _f64(draws),
                           _f64(recovery), _f64(recovery_draws), _i64(seeds),
                           int(max_steps), bool(sir))


def bfs_distances(indptr, indices, source, impl=None):
    impl = impl or _impl
    return impl.bfs_distances(_i64(indptr), _i64(indices), int(source))
