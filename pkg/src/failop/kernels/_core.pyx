# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; see kernels/pure.py for the reference semantics.

Arithmetic must stay expression-for-expression identical to the fallback:
the two backends are required to produce bit-equal outputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def scan_rays(double ox, double oy, double[::1] dir_x, double[::1] dir_y,
              double[:, ::1] segments):
    cdef Py_ssize_t n = dir_x.shape[0]
    cdef Py_ssize_t m = segments.shape[0]
    out_np = np.full(n, np.inf, dtype=np.float64)
    if m == 0 or n == 0:
        return out_np
    cdef double[::1] out = out_np
    cdef Py_ssize_t i, j
    cdef double dx, dy, ex, ey, wx, wy, det, num_t, t, u, best
    with nogil:
        for i in range(n):
            best = INFINITY
            dx = dir_x[i]
            dy = dir_y[i]
            for j in range(m):
                ex = segments[j, 2] - segments[j, 0]
                ey = segments[j, 3] - segments[j, 1]
                wx = segments[j, 0] - ox
                wy = segments[j, 1] - oy
                num_t = ex * wy - ey * wx
                det = ex * dy - ey * dx
                if fabs(det) < 1e-12:
                    continue
                t = num_t / det
                u = (dx * wy - dy * wx) / det
                if t >= 0.0 and u >= 0.0 and u <= 1.0 and t < best:
                    best = t
            out[i] = best
    return out_np


def cluster_labels(double[::1] xs, double[::1] ys, double eps, int min_pts):
    cdef Py_ssize_t n = xs.shape[0]
    labels_np = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return labels_np
    cdef int[::1] labels = labels_np
    visited_np = np.zeros(n, dtype=np.uint8)
    enqueued_np = np.zeros(n, dtype=np.uint8)
    queue_np = np.empty(n, dtype=np.int64)
    cdef unsigned char[::1] visited = visited_np
    cdef unsigned char[::1] enqueued = enqueued_np
    cdef long long[::1] queue = queue_np
    cdef double eps2 = eps * eps
    cdef Py_ssize_t i, j, k, head, tail
    cdef long long jj
    cdef int cid = 0
    cdef int count
    cdef double dx, dy

    with nogil:
        for i in range(n):
            if visited[i]:
                continue
            visited[i] = 1
            count = 0
            for k in range(n):
                dx = xs[k] - xs[i]
                dy = ys[k] - ys[i]
                if dx * dx + dy * dy <= eps2:
                    count += 1
            if count < min_pts:
                continue
            labels[i] = cid
            head = 0
            tail = 0
            for k in range(n):
                dx = xs[k] - xs[i]
                dy = ys[k] - ys[i]
                if dx * dx + dy * dy <= eps2:
                    if not enqueued[k]:
                        enqueued[k] = 1
                        queue[tail] = k
                        tail += 1
            while head < tail:
                jj = queue[head]
                j = <Py_ssize_t> jj
                head += 1
                if labels[j] == -1:
                    labels[j] = cid
                if visited[j]:
                    continue
                visited[j] = 1
                count = 0
                for k in range(n):
                    dx = xs[k] - xs[j]
                    dy = ys[k] - ys[j]
                    if dx * dx + dy * dy <= eps2:
                        count += 1
                if count >= min_pts:
                    for k in range(n):
                        dx = xs[k] - xs[j]
                        dy = ys[k] - ys[j]
                        if dx * dx + dy * dy <= eps2:
                            if not enqueued[k]:
                                enqueued[k] = 1
                                queue[tail] = k
                                tail += 1
            cid += 1
    return labels_np
