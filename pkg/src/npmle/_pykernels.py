"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and same results up to floating-point summation order.
The ``nthreads`` arguments are accepted and ignored.
"""

import numpy as np

_CHUNK = 1 << 22  # max entries of a temporary (rows x atoms) block


def neg_half_sqdist(x, a, nthreads=1):
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    diff = x[:, None, :] - a[None, :, :]
    return -0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def _row_blocks(n, m):
    step = max(1, _CHUNK // max(m, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def mixture_logsumexp(x, a, logw, want_score=True, nthreads=1):
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    logw = np.asarray(logw, dtype=np.float64)
    n, d = x.shape
    keep = np.flatnonzero(logw > -np.inf)
    lse = np.full(n, -np.inf)
    score = np.zeros((n, d) if want_score else (0, d))
    top = np.full(n, -1, dtype=np.intp)
    if keep.size == 0:
        return lse, score, top
    ak, lk = a[keep], logw[keep]
    for rows in _row_blocks(n, keep.size):
        t = neg_half_sqdist(x[rows], ak) + lk
        idx = np.argmax(t, axis=1)
        mx = t[np.arange(t.shape[0]), idx]
        e = np.exp(t - mx[:, None])
        tot = e.sum(axis=1)
        lse[rows] = mx + np.log(tot)
        top[rows] = keep[idx]
        if want_score:
            score[rows] = (e @ ak) / tot[:, None] - x[rows]
    return lse, score, top


def _slope(f, dvec, ow, g):
    den = f + g * dvec
    bad = den <= 0.0
    if np.any(bad & (dvec < 0.0)):
        return -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(bad, 0.0, ow * dvec / np.where(bad, 1.0, den))
    return float(terms.sum())


def line_search(f, dvec, ow, gmax, iters=50):
    if _slope(f, dvec, ow, 0.0) <= 0.0:
        return 0.0
    if _slope(f, dvec, ow, gmax) >= 0.0:
        return float(gmax)
    lo, hi = 0.0, float(gmax)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _slope(f, dvec, ow, mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def _assign(x, centers):
    dist = -2.0 * neg_half_sqdist(x, centers)
    labels = np.argmin(dist, axis=1)
    best = dist[np.arange(x.shape[0]), labels]
    return labels.astype(np.intp), best


def lloyd(x, centers, max_iter=300):
    x = np.asarray(x, dtype=np.float64)
    k = centers.shape[0]
    prev = np.full(x.shape[0], -1, dtype=np.intp)
    n_iter = 0
    for it in range(max_iter):
        labels, dist = _assign(x, centers)
        n_iter = it + 1
        if np.array_equal(labels, prev):
            break
        prev = labels
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                centers[j] = x[labels == j].mean(axis=0)
            else:
                far = int(np.argmax(dist))
                centers[j] = x[far]
                dist[far] = 0.0
    labels, dist = _assign(x, centers)
    return labels, float(dist.sum()), n_iter
