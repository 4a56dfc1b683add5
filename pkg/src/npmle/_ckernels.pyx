# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in :mod:`npmle._pykernels` with the same
signature; :mod:`npmle.kernels` picks one at import time.  Row-wise work may
run under OpenMP, but every reduction inside a row is a plain sequential loop
over the atom index, so results do not depend on the thread count.
"""

import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, log, INFINITY


def neg_half_sqdist(const double[:, ::1] x, const double[:, ::1] a, int nthreads=1):
    """Return the (n, m) matrix ``-0.5 * ||x_i - a_j||^2``."""
    cdef Py_ssize_t n = x.shape[0], m = a.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, t
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = x[i, k] - a[j, k]
                s = s + t * t
            o[i, j] = -0.5 * s
    return out


def mixture_logsumexp(const double[:, ::1] x, const double[:, ::1] a,
                      const double[::1] logw, bint want_score=True, int nthreads=1):
    """Streamed log-sum-exp over atoms without materialising the kernel.

    Returns ``(lse, score, top)`` where ``lse[i] = log sum_j exp(logw_j -
    ||x_i - a_j||^2 / 2)``, ``score[i]`` is the responsibility-weighted mean
    of ``a_j - x_i`` and ``top[i]`` the first index of the largest term.
    Atoms with ``logw_j == -inf`` are skipped.
    """
    cdef Py_ssize_t n = x.shape[0], m = a.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k, best
    cdef double s, t, mx, tot, e
    lse = np.empty(n, dtype=np.float64)
    score = np.zeros((n if want_score else 0, d), dtype=np.float64)
    top = np.empty(n, dtype=np.intp)
    cdef double[::1] lse_v = lse
    cdef double[:, ::1] sc = score
    cdef Py_ssize_t[::1] top_v = top
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="static"):
        mx = -INFINITY
        best = -1
        for j in range(m):
            if logw[j] == -INFINITY:
                continue
            s = 0.0
            for k in range(d):
                t = x[i, k] - a[j, k]
                s = s + t * t
            s = logw[j] - 0.5 * s
            if s > mx:
                mx = s
                best = j
        top_v[i] = best
        if best < 0:
            lse_v[i] = -INFINITY
            continue
        tot = 0.0
        for j in range(m):
            if logw[j] == -INFINITY:
                continue
            s = 0.0
            for k in range(d):
                t = x[i, k] - a[j, k]
                s = s + t * t
            e = exp(logw[j] - 0.5 * s - mx)
            tot = tot + e
            if want_score:
                for k in range(d):
                    sc[i, k] = sc[i, k] + e * (a[j, k] - x[i, k])
        lse_v[i] = mx + log(tot)
        if want_score:
            for k in range(d):
                sc[i, k] = sc[i, k] / tot
    return lse, score, top


cdef inline double _slope(const double[::1] f, const double[::1] dvec,
                          const double[::1] ow, double g) noexcept nogil:
    cdef Py_ssize_t i, n = f.shape[0]
    cdef double s = 0.0, den
    for i in range(n):
        den = f[i] + g * dvec[i]
        if den <= 0.0:
            if dvec[i] < 0.0:
                return -INFINITY
            continue
        s += ow[i] * dvec[i] / den
    return s


def line_search(const double[::1] f, const double[::1] dvec, const double[::1] ow,
                double gmax, int iters=50):
    """Bisection for the maximiser of ``sum_i ow_i log(f_i + g d_i)`` on [0, gmax].

    Returns the lower end of the final bracket, where the slope is still
    nonnegative, so the step never decreases the objective.
    """
    cdef double lo = 0.0, hi = gmax, mid
    cdef int it
    if _slope(f, dvec, ow, 0.0) <= 0.0:
        return 0.0
    if _slope(f, dvec, ow, gmax) >= 0.0:
        return gmax
    with nogil:
        for it in range(iters):
            mid = 0.5 * (lo + hi)
            if _slope(f, dvec, ow, mid) >= 0.0:
                lo = mid
            else:
                hi = mid
    return lo


cdef double _assign(const double[:, ::1] x, const double[:, ::1] c,
                    Py_ssize_t[::1] labels, double[::1] dist) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], k = c.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, q, best
    cdef double s, t, bd, total = 0.0
    for i in range(n):
        bd = INFINITY
        best = 0
        for j in range(k):
            s = 0.0
            for q in range(d):
                t = x[i, q] - c[j, q]
                s += t * t
            if s < bd:
                bd = s
                best = j
        labels[i] = best
        dist[i] = bd
        total += bd
    return total


def lloyd(const double[:, ::1] x, double[:, ::1] centers, int max_iter=300):
    """Lloyd iterations from ``centers`` (modified in place).

    Stops when the assignment is unchanged or after ``max_iter`` sweeps.  An
    empty cluster is reseeded at the point farthest from its current centre.
    Returns ``(labels, inertia, n_iter)``.
    """
    cdef Py_ssize_t n = x.shape[0], k = centers.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, q, far
    cdef int it, n_iter = 0
    cdef bint changed
    labels_arr = np.full(n, -1, dtype=np.intp)
    prev_arr = np.full(n, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] labels = labels_arr
    cdef Py_ssize_t[::1] prev = prev_arr
    cdef double[::1] dist = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] sums = np.zeros((k, d), dtype=np.float64)
    cdef Py_ssize_t[::1] counts = np.zeros(k, dtype=np.intp)
    cdef double inertia, fd
    with nogil:
        for it in range(max_iter):
            _assign(x, centers, labels, dist)
            n_iter = it + 1
            changed = False
            for i in range(n):
                if labels[i] != prev[i]:
                    changed = True
                prev[i] = labels[i]
            if not changed:
                break
            for j in range(k):
                counts[j] = 0
                for q in range(d):
                    sums[j, q] = 0.0
            for i in range(n):
                j = labels[i]
                counts[j] += 1
                for q in range(d):
                    sums[j, q] += x[i, q]
            for j in range(k):
                if counts[j] > 0:
                    for q in range(d):
                        centers[j, q] = sums[j, q] / counts[j]
                else:
                    far = 0
                    fd = -1.0
                    for i in range(n):
                        if dist[i] > fd:
                            fd = dist[i]
                            far = i
                    for q in range(d):
                        centers[j, q] = x[far, q]
                    dist[far] = 0.0
        inertia = _assign(x, centers, labels, dist)
    return labels_arr, inertia, n_iter
