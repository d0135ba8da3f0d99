"""Per-user key locations: grid-accelerated DBSCAN, dominant class, rank."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .join import JoinedEvent
from .landuse.parcels import N_CLASSES

NOISE = -1
KEY_LOCATION_COLUMNS = ["user_id", "rank", "centroid_lon", "centroid_lat", "event_count", "dominant_class"]


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.00225
    min_pts: int = 3

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


@dataclass(frozen=True)
class KeyLocation:
    user_id: str
    centroid_lon: float
    centroid_lat: float
    event_count: int
    dominant_class: int
    rank: int


def dbscan(points, params: DbscanParams | None = None) -> np.ndarray:
    """Label points (lon, lat rows) with a cluster index or ``NOISE``.

    Neighbourhoods use Euclidean distance in degrees and include the point
    itself. Points are bucketed on a grid of cell size ``eps`` so only the
    3x3 surrounding cells are scanned.

    Clusters are numbered by their first core point in canonical order
    (points sorted by lon, lat, input index). A border point within reach of
    several clusters joins the cluster of its canonically first core
    neighbour, which makes the partition independent of input order.
    """
    params = params or DbscanParams()
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return np.full(0, NOISE, dtype=np.int64)
    labels = [NOISE] * n
    eps = params.eps
    eps2 = eps * eps
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()

    order = sorted(range(n), key=lambda i: (xs[i], ys[i], i))
    rank = [0] * n
    for r, i in enumerate(order):
        rank[i] = r

    cells: dict[tuple[int, int], list[int]] = defaultdict(list)
    keys = []
    for i in order:
        key = (math.floor(xs[i] / eps), math.floor(ys[i] / eps))
        keys.append(key)
        cells[key].append(i)

    neighbours: list[list[int]] = [None] * n  # type: ignore[list-item]
    for i, (cx, cy) in zip(order, keys):
        xi, yi = xs[i], ys[i]
        found = []
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                bucket = cells.get((gx, gy))
                if not bucket:
                    continue
                for j in bucket:
                    dx = xs[j] - xi
                    dy = ys[j] - yi
                    if dx * dx + dy * dy <= eps2:
                        found.append(j)
        neighbours[i] = found

    core = [len(neighbours[i]) >= params.min_pts for i in range(n)]

    next_label = 0
    for seed in order:
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = next_label
        stack = [seed]
        while stack:
            i = stack.pop()
            for j in neighbours[i]:
                if core[j] and labels[j] == NOISE:
                    labels[j] = next_label
                    stack.append(j)
        next_label += 1

    for i in range(n):
        if core[i]:
            continue
        first = None
        for j in neighbours[i]:
            if core[j] and (first is None or rank[j] < rank[first]):
                first = j
        if first is not None:
            labels[i] = labels[first]
    return np.array(labels, dtype=np.int64)


def _dominant(classes: Iterable[int]) -> int:
    counts = Counter(classes)
    best = max(counts.values())
    return min(c for c, k in counts.items() if k == best)


def extract_key_locations(events: Sequence[JoinedEvent], params: DbscanParams | None = None) -> list[KeyLocation]:
    """Key locations of a single user, ranked by event count."""
    params = params or DbscanParams()
    if not events:
        return []
    user_ids = {e.user_id for e in events}
    if len(user_ids) != 1:
        raise ValueError("extract_key_locations expects events of exactly one user")
    user_id = next(iter(user_ids))
    labels = dbscan([(e.lon, e.lat) for e in events], params)
    members: dict[int, list[JoinedEvent]] = defaultdict(list)
    for lab, ev in zip(labels.tolist(), events):
        if lab != NOISE:
            members[lab].append(ev)

    found = []
    for group in members.values():
        if len(group) < params.min_pts:
            continue
        lon = math.fsum(e.lon for e in group) / len(group)
        lat = math.fsum(e.lat for e in group) / len(group)
        found.append((len(group), lon, lat, _dominant(e.activity_class for e in group)))
    found.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [KeyLocation(user_id, lon, lat, count, cls, r + 1) for r, (count, lon, lat, cls) in enumerate(found)]


def key_locations_by_user(
    events: Iterable[JoinedEvent], params: DbscanParams | None = None, executor=None
) -> list[KeyLocation]:
    """Cluster every user separately; output sorted by (user_id, rank)."""
    groups: dict[str, list[JoinedEvent]] = defaultdict(list)
    for ev in events:
        groups[ev.user_id].append(ev)
    users = sorted(groups)
    # event order inside a user does not affect the partition, but fix it anyway
    tracks = [sorted(groups[u], key=lambda e: (e.timestamp, e.lon, e.lat)) for u in users]
    if executor is None:
        results = [extract_key_locations(t, params) for t in tracks]
    else:
        results = list(executor.map(lambda t: extract_key_locations(t, params), tracks))
    return [kl for res in results for kl in res]


def rank_composition(key_locations: Iterable[KeyLocation]) -> dict[int, list[float]]:
    """Share of users per dominant class at each rank.

    Returns ``{rank: [fraction for class 1..12]}``; ranks nobody reached are
    absent.
    """
    counts: dict[int, list[int]] = defaultdict(lambda: [0] * N_CLASSES)
    for kl in key_locations:
        counts[kl.rank][kl.dominant_class - 1] += 1
    out = {}
    for r in sorted(counts):
        total = sum(counts[r])
        out[r] = [c / total for c in counts[r]]
    return out


def rank_user_counts(key_locations: Iterable[KeyLocation]) -> dict[int, int]:
    counts: Counter[int] = Counter(kl.rank for kl in key_locations)
    return dict(sorted(counts.items()))


def write_key_locations(path, key_locations: Iterable[KeyLocation], header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEY_LOCATION_COLUMNS)
        for kl in key_locations:
            w.writerow([kl.user_id, kl.rank, repr(kl.centroid_lon), repr(kl.centroid_lat), kl.event_count, kl.dominant_class])


def read_key_locations(path) -> list[KeyLocation]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != KEY_LOCATION_COLUMNS:
            raise ValueError(f"unexpected key-location header: {header}")
        return [
            KeyLocation(row[0], float(row[2]), float(row[3]), int(row[4]), int(row[5]), int(row[1]))
            for row in reader
            if row
        ]
