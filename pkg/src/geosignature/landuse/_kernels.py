"""Compiled point-to-parcel kernels used by the spatial index."""

from __future__ import annotations

import math

import numba
import numpy as np

from ..geo import KM_PER_DEGREE

_PRUNE_SLACK = 1.0 + 1e-12


@numba.njit(cache=True, nogil=True)
def box_lower_bound(px, py, minx, miny, maxx, maxy, c):
    dx = 0.0
    if px < minx:
        dx = minx - px
    elif px > maxx:
        dx = px - maxx
    dy = 0.0
    if py < miny:
        dy = miny - py
    elif py > maxy:
        dy = py - maxy
    dx *= c
    return KM_PER_DEGREE * math.sqrt(dx * dx + dy * dy)


@numba.njit(cache=True, nogil=True)
def parcel_distance(px, py, p, p_ring_start, ring_vstart, vx, vy, p_cos):
    """Projected distance in km from a point to parcel ``p``; 0 inside or on the boundary."""
    c = p_cos[p]
    inside = False
    best_d2 = np.inf
    for r in range(p_ring_start[p], p_ring_start[p + 1]):
        for k in range(ring_vstart[r], ring_vstart[r + 1] - 1):
            x1 = vx[k]
            y1 = vy[k]
            x2 = vx[k + 1]
            y2 = vy[k + 1]
            if (y1 > py) != (y2 > py):
                xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                if px < xint:
                    inside = not inside
            ax = (x1 - px) * c
            ay = y1 - py
            bx = (x2 - px) * c
            by = y2 - py
            sx = bx - ax
            sy = by - ay
            seg2 = sx * sx + sy * sy
            t = 0.0
            if seg2 > 0.0:
                t = -(ax * sx + ay * sy) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            qx = ax + t * sx
            qy = ay + t * sy
            d2 = qx * qx + qy * qy
            if d2 < best_d2:
                best_d2 = d2
    if inside or best_d2 == 0.0:
        return 0.0
    return KM_PER_DEGREE * math.sqrt(best_d2)


@numba.njit(cache=True, nogil=True)
def _query_one(
    px, py, stack, lbs, order,
    node_box, node_cos, node_start, node_end, node_leaf, root,
    leaf_items, p_box, p_ring_start, ring_vstart, vx, vy, p_cos,
):
    best = np.inf
    best_idx = -1
    top = 0
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        lb = box_lower_bound(px, py, node_box[node, 0], node_box[node, 1],
                             node_box[node, 2], node_box[node, 3], node_cos[node])
        if lb > best * _PRUNE_SLACK:
            continue
        s = node_start[node]
        e = node_end[node]
        if node_leaf[node]:
            for j in range(s, e):
                p = leaf_items[j]
                plb = box_lower_bound(px, py, p_box[p, 0], p_box[p, 1], p_box[p, 2], p_box[p, 3], p_cos[p])
                if plb > best * _PRUNE_SLACK:
                    continue
                d = parcel_distance(px, py, p, p_ring_start, ring_vstart, vx, vy, p_cos)
                if d < best or (d == best and p < best_idx):
                    best = d
                    best_idx = p
        else:
            n = e - s
            for j in range(n):
                ch = s + j
                lbs[j] = box_lower_bound(px, py, node_box[ch, 0], node_box[ch, 1],
                                         node_box[ch, 2], node_box[ch, 3], node_cos[ch])
                order[j] = ch
            # insertion sort, descending, so the closest child is popped first
            for a in range(1, n):
                kl = lbs[a]
                ko = order[a]
                b = a - 1
                while b >= 0 and lbs[b] < kl:
                    lbs[b + 1] = lbs[b]
                    order[b + 1] = order[b]
                    b -= 1
                lbs[b + 1] = kl
                order[b + 1] = ko
            for j in range(n):
                if lbs[j] <= best * _PRUNE_SLACK:
                    stack[top] = order[j]
                    top += 1
    return best_idx, best


@numba.njit(cache=True, nogil=True)
def nearest_batch(
    qx, qy, out_idx, out_dist, capacity, depth,
    node_box, node_cos, node_start, node_end, node_leaf, root,
    leaf_items, p_box, p_ring_start, ring_vstart, vx, vy, p_cos,
):
    stack = np.empty(capacity * (depth + 2) + 1, np.int64)
    lbs = np.empty(capacity, np.float64)
    order = np.empty(capacity, np.int64)
    for i in range(qx.shape[0]):
        idx, d = _query_one(
            qx[i], qy[i], stack, lbs, order,
            node_box, node_cos, node_start, node_end, node_leaf, root,
            leaf_items, p_box, p_ring_start, ring_vstart, vx, vy, p_cos,
        )
        out_idx[i] = idx
        out_dist[i] = d
