"""Landuse parcels, the activity-class legend, and area weights."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..geo import KM_PER_DEGREE

N_CLASSES = 12

# Only residential, educational, work, civic and shopping are fixed names;
# the other seven are placeholders until a source legend confirms them.
DEFAULT_CLASS_NAMES: dict[int, str] = {
    1: "residential",
    2: "class_2",
    3: "class_3",
    4: "educational",
    5: "class_5",
    6: "work",
    7: "class_7",
    8: "civic",
    9: "shopping",
    10: "class_10",
    11: "class_11",
    12: "class_12",
}


class GeometryError(ValueError):
    pass


@dataclass
class ActivityLegend:
    entries: dict[str, int]
    class_names: dict[int, str] = field(default_factory=lambda: dict(DEFAULT_CLASS_NAMES))

    def __post_init__(self) -> None:
        for code, cls in self.entries.items():
            if not 1 <= cls <= N_CLASSES:
                raise ValueError(f"activity class for {code!r} outside 1..{N_CLASSES}: {cls}")
        for cls in self.class_names:
            if not 1 <= cls <= N_CLASSES:
                raise ValueError(f"class name index outside 1..{N_CLASSES}: {cls}")

    def lookup(self, code: str) -> int | None:
        return self.entries.get(code)


def load_legend(source) -> ActivityLegend:
    """Read a ``landuse_code,activity_class`` CSV."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["landuse_code", "activity_class"]:
        raise ValueError("legend header must be landuse_code,activity_class")
    entries = {}
    for row in reader:
        if len(row) < 2:
            raise ValueError(f"bad legend row: {row}")
        entries[row[0].strip()] = int(row[1])
    return ActivityLegend(entries)


def write_legend(path, legend: ActivityLegend) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["landuse_code", "activity_class"])
        for code in sorted(legend.entries):
            writer.writerow([code, legend.entries[code]])


def _ring_signed_area(xs: np.ndarray, ys: np.ndarray) -> float:
    # closed ring: last vertex repeats the first; shift to the first vertex for conditioning
    xs = xs - xs[0]
    ys = ys - ys[0]
    return 0.5 * float(np.dot(xs[:-1], ys[1:]) - np.dot(xs[1:], ys[:-1]))


def _ring_centroid_lat(ring: np.ndarray) -> float:
    x0, y0 = ring[0]
    x, y = ring[:, 0] - x0, ring[:, 1] - y0
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    a = cross.sum()
    if a == 0.0:
        raise GeometryError("degenerate ring with zero area")
    return float(y0 + ((y[:-1] + y[1:]) * cross).sum() / (3.0 * a))


def polygon_area_km2(rings: Sequence[np.ndarray]) -> float:
    """Area of a polygon (exterior ring first, then holes) in km².

    Coordinates are projected locally with ``x = lon * cos(lat0)`` and
    ``y = lat``, both scaled by 111.195 km per degree, where ``lat0`` is the
    centroid latitude of the exterior ring.
    """
    rings = [np.asarray(r, dtype=np.float64) for r in rings]
    lat0 = _ring_centroid_lat(rings[0])
    c = math.cos(math.radians(lat0))
    total = 0.0
    for k, ring in enumerate(rings):
        a = abs(_ring_signed_area(ring[:, 0] * c, ring[:, 1])) * KM_PER_DEGREE**2
        total += a if k == 0 else -a
    if not total > 0.0:
        raise GeometryError("polygon has no positive area")
    return total


@dataclass(eq=False)
class Parcel:
    parcel_id: str
    rings: tuple[np.ndarray, ...]
    landuse_code: str
    activity_class: int
    area: float = 0.0
    centroid_lat: float = 0.0

    @classmethod
    def from_rings(cls, parcel_id: str, rings: Sequence, landuse_code: str, activity_class: int) -> "Parcel":
        arrs = tuple(_validate_ring(r) for r in rings)
        if not arrs:
            raise GeometryError("polygon without rings")
        if not 1 <= activity_class <= N_CLASSES:
            raise ValueError(f"activity class outside 1..{N_CLASSES}")
        area = polygon_area_km2(arrs)
        return cls(parcel_id, arrs, landuse_code, activity_class, area, _ring_centroid_lat(arrs[0]))

    @property
    def exterior(self) -> np.ndarray:
        return self.rings[0]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ext = self.rings[0]
        return (float(ext[:, 0].min()), float(ext[:, 1].min()), float(ext[:, 0].max()), float(ext[:, 1].max()))


def _validate_ring(ring) -> np.ndarray:
    arr = np.asarray(ring, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise GeometryError("ring must be a sequence of [lon, lat] pairs")
    arr = np.ascontiguousarray(arr[:, :2])
    if len(arr) < 4:
        raise GeometryError("ring needs at least 4 vertices")
    if not np.array_equal(arr[0], arr[-1]):
        raise GeometryError("ring is not closed")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite vertex")
    return arr


@dataclass
class ParcelLoadReport:
    loaded: int = 0
    unmapped: int = 0
    invalid: int = 0


def load_parcels(source, legend: ActivityLegend) -> tuple[list[Parcel], ParcelLoadReport]:
    """Read a GeoJSON FeatureCollection of Polygon/MultiPolygon parcels.

    Each feature needs a string ``landuse_code`` property. The parcel id is
    the feature ``id``, else a ``parcel_id`` property, else the feature's
    position. MultiPolygon parts become separate parcels named ``<id>#<k>``.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    elif isinstance(source, (bytes, bytearray)):
        doc = json.loads(bytes(source).decode("utf-8"))
    else:
        doc = json.load(source)
    if doc.get("type") != "FeatureCollection":
        raise ValueError("parcel file must be a GeoJSON FeatureCollection")

    report = ParcelLoadReport()
    parcels: list[Parcel] = []
    for i, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        fid = feat.get("id", props.get("parcel_id", i))
        fid = str(fid)
        code = props.get("landuse_code")
        cls = legend.lookup(str(code)) if code is not None else None
        if cls is None:
            report.unmapped += 1
            continue
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            parts = [geom.get("coordinates", [])]
        elif gtype == "MultiPolygon":
            parts = geom.get("coordinates", [])
        else:
            report.invalid += 1
            continue
        try:
            built = [
                Parcel.from_rings(fid if len(parts) == 1 else f"{fid}#{k}", rings, str(code), cls)
                for k, rings in enumerate(parts)
            ]
        except (GeometryError, ValueError, TypeError):
            report.invalid += 1
            continue
        parcels.extend(built)
    report.loaded = len(parcels)
    return parcels, report


def parcels_to_geojson(parcels: Iterable[Parcel]) -> dict:
    features = []
    for p in parcels:
        features.append(
            {
                "type": "Feature",
                "id": p.parcel_id,
                "properties": {"landuse_code": p.landuse_code},
                "geometry": {"type": "Polygon", "coordinates": [r.tolist() for r in p.rings]},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def class_area_weights(parcels: Iterable[Parcel]) -> dict[int, float]:
    """Share of total parcel area per activity class."""
    per_class: dict[int, list[float]] = defaultdict(list)
    for p in parcels:
        per_class[p.activity_class].append(p.area)
    if not per_class:
        raise ValueError("no parcels")
    sums = {c: math.fsum(v) for c, v in per_class.items()}
    total = math.fsum(sums.values())
    return {c: sums[c] / total for c in sorted(sums)}
