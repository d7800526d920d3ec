"""Pure-Python/numpy versions of the compiled kernels.

Every routine here mirrors one in ``_kernels.pyx`` and uses the same
arithmetic order so both backends return identical floats.
"""

import math

import numpy as np

_CHUNK = 2048


def _sq_dists(a, b):
    # accumulate coordinate by coordinate, matching the compiled loop
    diff = a[:, None, 0] - b[None, :, 0]
    acc = diff * diff
    for k in range(1, a.shape[1]):
        diff = a[:, None, k] - b[None, :, k]
        acc += diff * diff
    return acc


def min_sq_dist(a, b):
    """For every row of ``a`` the squared distance to its nearest row of ``b``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    out = np.empty(a.shape[0])
    for start in range(0, a.shape[0], _CHUNK):
        stop = min(start + _CHUNK, a.shape[0])
        out[start:stop] = _sq_dists(a[start:stop], b).min(axis=1)
    return out


def kth_sq_dist(points, k):
    """Squared distance from each point to its k-th closest *other* point."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    out = np.empty(n)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d2 = _sq_dists(points[start:stop], points)
        rows = np.arange(stop - start)
        d2[rows, rows + start] = np.inf
        out[start:stop] = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return out


def linear_gd(eigvals, lam, q0, alpha, max_iters, tol, record):
    """Gradient descent on q^T D q + lam (|q|^2 - 1)^2 with diagonal D.

    Returns ``(q, iterations, status, path, losses)`` where status is 0 for
    converged, 1 for exhausted, 2 for diverged. ``path``/``losses`` hold every
    iterate when ``record`` is true, else only the endpoints.
    """
    d = len(eigvals)
    D = [float(v) for v in eigvals]
    q = [float(v) for v in q0]
    path = [list(q)]
    losses = [_loss(D, lam, q)]
    status = 1
    it = 0
    while True:
        nq = 0.0
        for j in range(d):
            nq += q[j] * q[j]
        s = 2.0 * lam * (nq - 1.0)
        g = [2.0 * (D[j] + s) * q[j] for j in range(d)]
        gn = 0.0
        for j in range(d):
            gn += g[j] * g[j]
        if math.sqrt(gn) < tol:
            status = 0
            break
        if it >= max_iters:
            break
        for j in range(d):
            q[j] = q[j] - alpha * g[j]
        it += 1
        nq = 0.0
        for j in range(d):
            nq += q[j] * q[j]
        if nq > 1e6:
            status = 2
            break
        if record:
            path.append(list(q))
            losses.append(_loss(D, lam, q))
    if not record:
        path.append(list(q))
        losses.append(_loss(D, lam, q))
    return np.array(q), it, status, np.array(path), np.array(losses)


def _loss(D, lam, q):
    quad = 0.0
    nq = 0.0
    for j in range(len(D)):
        quad += D[j] * q[j] * q[j]
        nq += q[j] * q[j]
    r = nq - 1.0
    return quad + lam * r * r


SERIES_CUTOFF = 1.220703125e-04


def softplus_pair(s, beta):
    """(softplus(s), softplus'(s)) elementwise, overflow-safe."""
    y = beta * np.ascontiguousarray(s, dtype=np.float64)
    e = np.exp(-np.abs(y))
    series = e * (1.0 - e * (0.5 - e * (1.0 / 3.0 - e * (0.25 - e * 0.2))))
    tail = np.where(e < SERIES_CUTOFF, series, np.log1p(e))
    r = 1.0 / (1.0 + e)
    pos = y >= 0
    act = (np.where(pos, y, 0.0) + tail) / beta
    slope = np.where(pos, r, e * r)
    return act, slope
