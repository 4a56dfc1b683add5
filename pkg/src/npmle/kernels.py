"""Backend selection for the hot loops.

The compiled extension ``npmle._ckernels`` is used when it imports cleanly;
otherwise, or when ``NPMLE_PURE_PYTHON=1`` is set, the numpy versions in
``npmle._pykernels`` are used.  ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

if os.environ.get("NPMLE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

_threads = os.cpu_count() or 1


def set_num_threads(n):
    """Set the worker count for row-parallel kernels (0 or None = all cores)."""
    global _threads
    _threads = int(n) if n else (os.cpu_count() or 1)


def get_num_threads():
    return _threads


def neg_half_sqdist(x, a):
    return _impl.neg_half_sqdist(x, a, _threads)


def mixture_logsumexp(x, a, logw, want_score=True):
    return _impl.mixture_logsumexp(x, a, logw, want_score, _threads)


def line_search(f, dvec, ow, gmax, iters=50):
    return _impl.line_search(f, dvec, ow, gmax, iters)


def lloyd(x, centers, max_iter=300):
    return _impl.lloyd(x, centers, max_iter)
