# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled distance kernels. Fused loops, no n*m temporaries.

Mirror of driftguard.kernels._numpy; that module documents the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

BACKEND = "cython"


def pairwise_sqdist(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], d = av.shape[1]
    if bv.shape[1] != d:
        raise ValueError("dimension mismatch")
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, t
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                diff = av[i, t] - bv[j, t]
                acc += diff * diff
            ov[i, j] = acc
    return out


def assign_nearest(x, centroids):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], k = cv.shape[0], d = xv.shape[1]
    if cv.shape[1] != d:
        raise ValueError("dimension mismatch")
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    cdef long long[::1] lv = labels
    cdef double[::1] dv = dists
    cdef Py_ssize_t i, j, t
    cdef double best, acc, diff
    cdef Py_ssize_t best_j
    for i in range(n):
        best = INFINITY
        best_j = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = xv[i, t] - cv[j, t]
                acc += diff * diff
            if acc < best:
                best = acc
                best_j = j
        lv[i] = best_j
        dv[i] = best
    return labels, dists


def knn_mean_dist(x, k):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], d = xv.shape[1]
    cdef Py_ssize_t kk = k
    if kk < 1 or kk >= n:
        raise ValueError("k must satisfy 1 <= k < n")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    # per-row insertion into a sorted buffer of the k smallest sqdists
    buf = np.empty(kk, dtype=np.float64)
    cdef double[::1] bv = buf
    cdef Py_ssize_t i, j, t, p, q
    cdef double acc, diff, s, thresh
    for i in range(n):
        for p in range(kk):
            bv[p] = INFINITY
        thresh = INFINITY
        for j in range(n):
            if j == i:
                continue
            acc = 0.0
            for t in range(d):
                diff = xv[i, t] - xv[j, t]
                acc += diff * diff
            if acc < thresh:
                p = kk - 1
                while p > 0 and bv[p - 1] > acc:
                    bv[p] = bv[p - 1]
                    p -= 1
                bv[p] = acc
                thresh = bv[kk - 1]
        s = 0.0
        for p in range(kk):
            s += sqrt(bv[p])
        ov[i] = s / kk
    return out


def meanshift_sweep(points, x, bandwidth):
    cdef double[:, ::1] pv = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = pv.shape[0], n = xv.shape[0], d = pv.shape[1]
    if xv.shape[1] != d:
        raise ValueError("dimension mismatch")
    cdef double bw2 = bandwidth * bandwidth
    new_points = np.empty((m, d), dtype=np.float64)
    cdef double[:, ::1] ov = new_points
    acc_buf = np.empty(d, dtype=np.float64)
    cdef double[::1] accv = acc_buf
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, move, max_move = 0.0
    cdef long count
    for i in range(m):
        for t in range(d):
            accv[t] = 0.0
        count = 0
        for j in range(n):
            acc = 0.0
            for t in range(d):
                diff = pv[i, t] - xv[j, t]
                acc += diff * diff
            if acc <= bw2:
                count += 1
                for t in range(d):
                    accv[t] += xv[j, t]
        move = 0.0
        if count > 0:
            for t in range(d):
                ov[i, t] = accv[t] / count
                diff = ov[i, t] - pv[i, t]
                move += diff * diff
        else:
            for t in range(d):
                ov[i, t] = pv[i, t]
        if move > max_move:
            max_move = move
    return new_points, sqrt(max_move)
