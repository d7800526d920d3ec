# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loop-heavy kernels; see ``_kernels_py`` for the contract."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _sq(const double[:, ::1] a, Py_ssize_t i,
                       const double[:, ::1] b, Py_ssize_t j, Py_ssize_t d) nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t k
    for k in range(d):
        diff = a[i, k] - b[j, k]
        acc += diff * diff
    return acc


def min_sq_dist(a, b):
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], d = av.shape[1]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double best, cur
    with nogil:
        for i in range(n):
            best = INFINITY
            for j in range(m):
                cur = _sq(av, i, bv, j, d)
                if cur < best:
                    best = cur
            ov[i] = best
    return out


cdef double _select(double* buf, Py_ssize_t n, Py_ssize_t kth) nogil:
    # Hoare quickselect; buf is clobbered
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j
    cdef double pivot, tmp
    while lo < hi:
        pivot = buf[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while buf[i] < pivot:
                i += 1
            while buf[j] > pivot:
                j -= 1
            if i <= j:
                tmp = buf[i]
                buf[i] = buf[j]
                buf[j] = tmp
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            break
    return buf[kth]


def kth_sq_dist(points, Py_ssize_t k):
    cdef const double[:, ::1] pv = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], d = pv.shape[1]
    out = np.empty(n)
    cdef double[::1] ov = out
    cdef double* buf = <double*> malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j, c
    try:
        with nogil:
            for i in range(n):
                c = 0
                for j in range(n):
                    if j != i:
                        buf[c] = _sq(pv, i, pv, j, d)
                        c += 1
                ov[i] = _select(buf, c, k - 1)
    finally:
        free(buf)
    return out


cdef double _loss(double* D, double lam, double* q, Py_ssize_t d) nogil:
    cdef double quad = 0.0, nq = 0.0, r
    cdef Py_ssize_t j
    for j in range(d):
        quad += D[j] * q[j] * q[j]
        nq += q[j] * q[j]
    r = nq - 1.0
    return quad + lam * r * r


def linear_gd(eigvals, double lam, q0, double alpha, long max_iters, double tol, bint record):
    cdef Py_ssize_t d = len(eigvals)
    cdef double* D = <double*> malloc(d * sizeof(double))
    cdef double* q = <double*> malloc(d * sizeof(double))
    cdef double* g = <double*> malloc(d * sizeof(double))
    if D == NULL or q == NULL or g == NULL:
        free(D); free(q); free(g)
        raise MemoryError()
    cdef Py_ssize_t j
    cdef long it = 0
    cdef int status = 1
    cdef double nq, s, gn
    path = []
    losses = []
    try:
        for j in range(d):
            D[j] = eigvals[j]
            q[j] = q0[j]
        path.append([q[j] for j in range(d)])
        losses.append(_loss(D, lam, q, d))
        while True:
            nq = 0.0
            for j in range(d):
                nq += q[j] * q[j]
            s = 2.0 * lam * (nq - 1.0)
            for j in range(d):
                g[j] = 2.0 * (D[j] + s) * q[j]
            gn = 0.0
            for j in range(d):
                gn += g[j] * g[j]
            if sqrt(gn) < tol:
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
                path.append([q[j] for j in range(d)])
                losses.append(_loss(D, lam, q, d))
        if not record:
            path.append([q[j] for j in range(d)])
            losses.append(_loss(D, lam, q, d))
        final = np.array([q[j] for j in range(d)])
    finally:
        free(D); free(q); free(g)
    return final, it, status, np.array(path), np.array(losses)


# below this, log1p(e) comes from a short series
cdef double SERIES_CUTOFF = 1.220703125e-04


def softplus_pair(s, double beta):
    """(softplus(s), softplus'(s)) elementwise for a 2-D array.

    ``exp`` and ``log1p`` run through numpy (vectorized, and identical to the
    fallback); the remaining selects and divisions are fused here.
    """
    y_arr = beta * np.ascontiguousarray(s, dtype=np.float64)
    e_arr = np.exp(-np.abs(y_arr))
    l_arr = np.log1p(e_arr)
    cdef const double[:, ::1] yv = y_arr
    cdef const double[:, ::1] ev = e_arr
    cdef const double[:, ::1] lg = l_arr
    cdef Py_ssize_t n = yv.shape[0], m = yv.shape[1], i, j
    act = np.empty((n, m))
    slope = np.empty((n, m))
    cdef double[:, ::1] av = act
    cdef double[:, ::1] lv = slope
    cdef double y, e, r, tail, series, pos
    with nogil:
        for i in range(n):
            for j in range(m):
                y = yv[i, j]
                e = ev[i, j]
                series = e * (1.0 - e * (0.5 - e * (1.0 / 3.0 - e * (0.25 - e * 0.2))))
                tail = series if e < SERIES_CUTOFF else lg[i, j]
                r = 1.0 / (1.0 + e)
                pos = y if y >= 0 else 0.0
                av[i, j] = (pos + tail) / beta
                lv[i, j] = r if y >= 0 else e * r
    return act, slope
