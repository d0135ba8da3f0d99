"""Bulk-loaded R-tree over parcels with exact nearest-parcel queries."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .parcels import Parcel

NODE_CAPACITY = 16


def _str_groups(cx: np.ndarray, cy: np.ndarray, capacity: int) -> list[np.ndarray]:
    """Sort-Tile-Recursive grouping: returns index groups of at most ``capacity``."""
    n = len(cx)
    n_groups = math.ceil(n / capacity)
    n_slabs = math.ceil(math.sqrt(n_groups))
    slab_size = n_slabs * capacity
    # lexsort keys are stable on the original index for equal centres
    by_x = np.lexsort((np.arange(n), cx))
    groups = []
    for s in range(0, n, slab_size):
        slab = by_x[s : s + slab_size]
        slab = slab[np.lexsort((slab, cy[slab]))]
        for g in range(0, len(slab), capacity):
            groups.append(slab[g : g + capacity])
    return groups


@dataclass(eq=False)
class SpatialIndex:
    """Immutable packed R-tree. Parcels are held sorted by ``parcel_id``."""

    parcels: list[Parcel]
    p_box: np.ndarray
    p_cos: np.ndarray
    p_ring_start: np.ndarray
    ring_vstart: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    node_box: np.ndarray
    node_cos: np.ndarray
    node_start: np.ndarray
    node_end: np.ndarray
    node_leaf: np.ndarray
    leaf_items: np.ndarray
    root: int
    depth: int
    capacity: int = NODE_CAPACITY

    def __len__(self) -> int:
        return len(self.parcels)

    def _arrays(self):
        return (
            self.node_box, self.node_cos, self.node_start, self.node_end, self.node_leaf, self.root,
            self.leaf_items, self.p_box, self.p_ring_start, self.ring_vstart, self.vx, self.vy, self.p_cos,
        )

    def query_indices(self, lons, lats) -> tuple[np.ndarray, np.ndarray]:
        qx = np.ascontiguousarray(lons, dtype=np.float64)
        qy = np.ascontiguousarray(lats, dtype=np.float64)
        out_idx = np.empty(len(qx), np.int64)
        out_dist = np.empty(len(qx), np.float64)
        _kernels.nearest_batch(qx, qy, out_idx, out_dist, self.capacity, self.depth, *self._arrays())
        return out_idx, out_dist

    def distance_to(self, position: int, lon: float, lat: float) -> float:
        return float(
            _kernels.parcel_distance(
                float(lon), float(lat), position, self.p_ring_start, self.ring_vstart, self.vx, self.vy, self.p_cos
            )
        )


def build_index(parcels: Sequence[Parcel], capacity: int = NODE_CAPACITY) -> SpatialIndex:
    if not parcels:
        raise ValueError("cannot index an empty parcel set")
    ordered = sorted(parcels, key=lambda p: p.parcel_id)
    n = len(ordered)

    p_box = np.empty((n, 4))
    p_cos = np.empty(n)
    p_ring_start = np.zeros(n + 1, np.int64)
    ring_sizes = []
    verts = []
    for i, p in enumerate(ordered):
        p_box[i] = p.bounds
        p_cos[i] = math.cos(math.radians(p.centroid_lat))
        p_ring_start[i + 1] = p_ring_start[i] + len(p.rings)
        for ring in p.rings:
            ring_sizes.append(len(ring))
            verts.append(ring)
    ring_vstart = np.zeros(len(ring_sizes) + 1, np.int64)
    np.cumsum(ring_sizes, out=ring_vstart[1:])
    allv = np.concatenate(verts)
    vx = np.ascontiguousarray(allv[:, 0])
    vy = np.ascontiguousarray(allv[:, 1])

    # leaves
    cx = 0.5 * (p_box[:, 0] + p_box[:, 2])
    cy = 0.5 * (p_box[:, 1] + p_box[:, 3])
    groups = _str_groups(cx, cy, capacity)
    leaf_items = np.concatenate(groups).astype(np.int64)
    boxes, coses, starts, ends, leafs = [], [], [], [], []
    pos = 0
    for g in groups:
        boxes.append((p_box[g, 0].min(), p_box[g, 1].min(), p_box[g, 2].max(), p_box[g, 3].max()))
        coses.append(p_cos[g].min())
        starts.append(pos)
        ends.append(pos + len(g))
        leafs.append(True)
        pos += len(g)
    level = np.arange(len(groups))
    depth = 1

    # internal levels; children of each node are stored contiguously
    node_box = np.array(boxes)
    node_cos = np.array(coses)
    node_start = np.array(starts, np.int64)
    node_end = np.array(ends, np.int64)
    node_leaf = np.array(leafs, np.bool_)
    while len(level) > 1:
        lb = node_box[level]
        groups = _str_groups(0.5 * (lb[:, 0] + lb[:, 2]), 0.5 * (lb[:, 1] + lb[:, 3]), capacity)
        # renumber the current level so each group occupies a contiguous id range
        perm = level[np.concatenate(groups)]
        base = level.min()
        node_box[base:] = node_box[perm]
        node_cos[base:] = node_cos[perm]
        node_start[base:] = node_start[perm]
        node_end[base:] = node_end[perm]
        node_leaf[base:] = node_leaf[perm]
        new_boxes, new_cos, new_start, new_end = [], [], [], []
        pos = base
        for g in groups:
            ids = np.arange(pos, pos + len(g))
            new_boxes.append(
                (node_box[ids, 0].min(), node_box[ids, 1].min(), node_box[ids, 2].max(), node_box[ids, 3].max())
            )
            new_cos.append(node_cos[ids].min())
            new_start.append(pos)
            new_end.append(pos + len(g))
            pos += len(g)
        first_new = len(node_box)
        node_box = np.vstack([node_box, np.array(new_boxes)])
        node_cos = np.concatenate([node_cos, new_cos])
        node_start = np.concatenate([node_start, np.array(new_start, np.int64)])
        node_end = np.concatenate([node_end, np.array(new_end, np.int64)])
        node_leaf = np.concatenate([node_leaf, np.zeros(len(groups), np.bool_)])
        level = np.arange(first_new, len(node_box))
        depth += 1

    return SpatialIndex(
        parcels=ordered,
        p_box=np.ascontiguousarray(p_box),
        p_cos=p_cos,
        p_ring_start=p_ring_start,
        ring_vstart=ring_vstart,
        vx=vx,
        vy=vy,
        node_box=np.ascontiguousarray(node_box),
        node_cos=np.ascontiguousarray(node_cos),
        node_start=node_start,
        node_end=node_end,
        node_leaf=node_leaf,
        leaf_items=leaf_items,
        root=int(level[0]),
        depth=depth,
        capacity=capacity,
    )


def nearest_parcel(index: SpatialIndex, lon: float, lat: float) -> tuple[str, float]:
    """Exact nearest parcel for one point; ties go to the lowest parcel_id."""
    idx, dist = index.query_indices(np.array([lon]), np.array([lat]))
    return index.parcels[int(idx[0])].parcel_id, float(dist[0])


def nearest_parcels(
    index: SpatialIndex, lons, lats, threads: int = 1, chunk_size: int = 65536
) -> tuple[np.ndarray, np.ndarray]:
    """Batch nearest-parcel query.

    Returns positions into ``index.parcels`` and distances in km. Work is
    split into fixed chunks, so the result does not depend on ``threads``.
    """
    lons = np.ascontiguousarray(lons, dtype=np.float64)
    lats = np.ascontiguousarray(lats, dtype=np.float64)
    n = len(lons)
    if threads <= 1 or n <= chunk_size:
        return index.query_indices(lons, lats)
    out_idx = np.empty(n, np.int64)
    out_dist = np.empty(n, np.float64)

    def work(start: int) -> None:
        stop = min(start + chunk_size, n)
        i, d = index.query_indices(lons[start:stop], lats[start:stop])
        out_idx[start:stop] = i
        out_dist[start:stop] = d

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(work, range(0, n, chunk_size)))
    return out_idx, out_dist
