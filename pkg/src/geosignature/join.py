"""Assignment of events to their nearest landuse parcel."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import GeoEvent
from .landuse.index import SpatialIndex, nearest_parcels

JOINED_COLUMNS = ["user_id", "timestamp", "lon", "lat", "parcel_id", "activity_class", "distance_km"]


@dataclass(frozen=True, slots=True)
class JoinedEvent:
    user_id: str
    timestamp: int
    lon: float
    lat: float
    parcel_id: str
    activity_class: int
    distance_km: float


def join_events(events: Sequence[GeoEvent], index: SpatialIndex, threads: int = 1) -> list[JoinedEvent]:
    """Attach the nearest parcel and its activity class to each event, keeping order."""
    if not events:
        return []
    lons = np.fromiter((e.lon for e in events), np.float64, len(events))
    lats = np.fromiter((e.lat for e in events), np.float64, len(events))
    idx, dist = nearest_parcels(index, lons, lats, threads=threads)
    parcels = index.parcels
    out = []
    for ev, i, d in zip(events, idx.tolist(), dist.tolist()):
        p = parcels[i]
        out.append(JoinedEvent(ev.user_id, ev.timestamp, ev.lon, ev.lat, p.parcel_id, p.activity_class, d))
    return out


def write_joined(path, events: Iterable[JoinedEvent], header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(JOINED_COLUMNS)
        for e in events:
            w.writerow([e.user_id, e.timestamp, repr(e.lon), repr(e.lat), e.parcel_id, e.activity_class, repr(e.distance_km)])


def read_joined(path) -> list[JoinedEvent]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != JOINED_COLUMNS:
            raise ValueError(f"unexpected joined-event header: {header}")
        return [
            JoinedEvent(r[0], int(r[1]), float(r[2]), float(r[3]), r[4], int(r[5]), float(r[6]))
            for r in reader
            if r
        ]
