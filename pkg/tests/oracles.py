"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math

import numpy as np
import shapely

KM = 111.195


class BruteNearest:
    """Exhaustive nearest-parcel scan with numpy over every polygon edge."""

    def __init__(self, parcels):
        ordered = sorted(parcels, key=lambda p: p.parcel_id)
        self.ids = [p.parcel_id for p in ordered]
        x1, y1, x2, y2, owner = [], [], [], [], []
        cos = []
        for k, p in enumerate(ordered):
            cos.append(math.cos(math.radians(shapely.Polygon(p.rings[0]).centroid.y)))
            for r in p.rings:
                r = np.asarray(r)
                x1.append(r[:-1, 0]); y1.append(r[:-1, 1]); x2.append(r[1:, 0]); y2.append(r[1:, 1])
                owner.append(np.full(len(r) - 1, k))
        self.x1, self.y1, self.x2, self.y2 = (np.concatenate(a) for a in (x1, y1, x2, y2))
        self.owner = np.concatenate(owner)
        self.starts = np.flatnonzero(np.r_[True, self.owner[1:] != self.owner[:-1]])
        self.cos = np.array(cos)[self.owner]

    def distances(self, px: float, py: float) -> np.ndarray:
        c = self.cos
        ax = (self.x1 - px) * c; ay = self.y1 - py
        bx = (self.x2 - px) * c; by = self.y2 - py
        sx = bx - ax; sy = by - ay
        seg2 = sx * sx + sy * sy
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(seg2 > 0, -(ax * sx + ay * sy) / seg2, 0.0)
        t = np.clip(t, 0.0, 1.0)
        qx = ax + t * sx; qy = ay + t * sy
        d2 = np.minimum.reduceat(qx * qx + qy * qy, self.starts)
        straddle = (self.y1 > py) != (self.y2 > py)
        with np.errstate(invalid="ignore", divide="ignore"):
            xint = self.x1 + (py - self.y1) * (self.x2 - self.x1) / (self.y2 - self.y1)
        crossings = np.add.reduceat((straddle & (px < xint)).astype(np.int64), self.starts)
        inside = (crossings % 2 == 1) | (d2 == 0)
        return np.where(inside, 0.0, KM * np.sqrt(d2))

    def nearest(self, px: float, py: float) -> tuple[str, float]:
        d = self.distances(px, py)
        k = int(np.argmin(d))  # first minimum = lowest parcel_id
        return self.ids[k], float(d[k])


def dbscan_naive(points, eps: float, min_pts: int) -> np.ndarray:
    """Quadratic DBSCAN with canonical-order border assignment."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return np.zeros(0, np.int64)
    dx = pts[:, 0][:, None] - pts[:, 0][None, :]
    dy = pts[:, 1][:, None] - pts[:, 1][None, :]
    adj = dx * dx + dy * dy <= eps * eps
    core = adj.sum(axis=1) >= min_pts
    order = sorted(range(n), key=lambda i: (pts[i, 0], pts[i, 1], i))
    labels = -np.ones(n, np.int64)
    nxt = 0
    for s in order:
        if not core[s] or labels[s] >= 0:
            continue
        frontier = [s]
        labels[s] = nxt
        while frontier:
            i = frontier.pop(0)
            for j in np.flatnonzero(adj[i] & core):
                if labels[j] < 0:
                    labels[j] = nxt
                    frontier.append(j)
        nxt += 1
    rank = np.empty(n, np.int64)
    rank[order] = np.arange(n)
    for i in range(n):
        if core[i]:
            continue
        cands = np.flatnonzero(adj[i] & core)
        if len(cands):
            labels[i] = labels[cands[np.argmin(rank[cands])]]
    return labels


def same_partition(a, b) -> bool:
    """Label arrays equal up to a renaming of clusters (noise = -1 fixed)."""
    a = list(map(int, a)); b = list(map(int, b))
    if len(a) != len(b):
        return False
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if (x == -1) != (y == -1):
            return False
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def dtw_enumerate(a, b) -> float:
    """Minimum over every monotone warping path, summing costs from the start."""
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc = acc + abs(a[i] - b[j])
        if i == n - 1 and j == m - 1:
            best = min(best, acc)
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best
