"""Numpy fallback kernels.

Expression order deliberately mirrors the C loops in _core.pyx term by term;
elementwise IEEE ops round identically, and the min reductions are
order-free, so both backends agree to the last bit.
"""

from __future__ import annotations

import numpy as np


def scan_rays(ox: float, oy: float, dir_x: np.ndarray, dir_y: np.ndarray,
              segments: np.ndarray) -> np.ndarray:
    """Nearest hit distance per ray (inf on miss).

    Rays start at (ox, oy) with unit directions (dir_x, dir_y); segments is
    an (m, 4) array of [px, py, qx, qy] endpoints.
    """
    n = dir_x.shape[0]
    out = np.full(n, np.inf, dtype=np.float64)
    if segments.shape[0] == 0 or n == 0:
        return out
    ex = segments[:, 2] - segments[:, 0]
    ey = segments[:, 3] - segments[:, 1]
    wx = segments[:, 0] - ox
    wy = segments[:, 1] - oy
    num_t = ex * wy - ey * wx
    with np.errstate(divide="ignore", invalid="ignore"):
        det = ex[None, :] * dir_y[:, None] - ey[None, :] * dir_x[:, None]
        t = num_t[None, :] / det
        u = (dir_x[:, None] * wy[None, :] - dir_y[:, None] * wx[None, :]) / det
        valid = (np.abs(det) >= 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    np.min(t, axis=1, out=out)
    return out


def cluster_labels(xs: np.ndarray, ys: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering labels, -1 for noise.

    Deterministic scan order: clusters are seeded at the lowest-index
    unvisited core point and grown breadth-first with neighbor lists in
    index order; a border point keeps the label of the first cluster that
    reaches it. min_pts counts the point itself; with min_pts=1 this is
    exactly the connected components of the eps-proximity graph.
    """
    n = xs.shape[0]
    labels = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return labels
    eps2 = eps * eps
    visited = np.zeros(n, dtype=bool)
    enqueued = np.zeros(n, dtype=bool)
    queue = np.empty(n, dtype=np.int64)
    cid = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        d2 = (xs - xs[i]) ** 2 + (ys - ys[i]) ** 2
        nb = np.nonzero(d2 <= eps2)[0]
        if nb.shape[0] < min_pts:
            continue
        labels[i] = cid
        head = tail = 0
        for k in nb:
            if not enqueued[k]:
                enqueued[k] = True
                queue[tail] = k
                tail += 1
        while head < tail:
            j = queue[head]
            head += 1
            if labels[j] == -1:
                labels[j] = cid
            if visited[j]:
                continue
            visited[j] = True
            d2j = (xs - xs[j]) ** 2 + (ys - ys[j]) ** 2
            nbj = np.nonzero(d2j <= eps2)[0]
            if nbj.shape[0] >= min_pts:
                for k in nbj:
                    if not enqueued[k]:
                        enqueued[k] = True
                        queue[tail] = k
                        tail += 1
        cid += 1
    return labels
