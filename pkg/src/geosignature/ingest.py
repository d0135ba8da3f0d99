"""Parsing of geotagged event streams plus duplicate and user-quality filters."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import ROUND_CEILING, Decimal
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .geo import haversine_km

EVENT_COLUMNS = ["user_id", "timestamp", "lon", "lat"]

# Rejection reasons, in report order.
REASON_EVENTS_PER_YEAR = "events_per_year"
REASON_ACTIVE_DAYS = "active_days"
REASON_SPEED = "speed"
REASON_BBOX = "outside_bbox"


class FormatError(ValueError):
    """Input does not follow the expected file layout."""


@dataclass(frozen=True, slots=True)
class GeoEvent:
    user_id: str
    timestamp: int
    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (-180.0 <= self.lon <= 180.0) or not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"coordinates out of range: ({self.lon}, {self.lat})")
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be a positive epoch value: {self.timestamp}")

    @property
    def key(self) -> tuple[str, int, float, float]:
        return (self.user_id, self.timestamp, self.lon, self.lat)


@dataclass(frozen=True)
class BoundingBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self) -> None:
        if self.min_lon > self.max_lon or self.min_lat > self.max_lat:
            raise ValueError("bounding box minimum exceeds maximum")

    def contains(self, lon: float, lat: float) -> bool:
        return self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"bounding box needs 4 comma-separated numbers, got {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class FilterPolicy:
    min_events_per_year: int = 10
    min_active_days: int = 30
    speed_percentile: float = 0.99
    bounding_box: BoundingBox | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.speed_percentile < 1.0:
            raise ValueError("speed_percentile must lie in (0, 1)")
        if self.min_events_per_year < 0 or self.min_active_days < 0:
            raise ValueError("filter counts must be non-negative")


@dataclass
class UserStats:
    user_id: str
    events_per_year: dict[int, int]
    active_days: int
    max_speed: float


@dataclass
class RejectionReport:
    """Counters written next to the filtered stream."""

    counts: dict[str, int] = field(
        default_factory=lambda: {
            REASON_BBOX: 0,
            REASON_EVENTS_PER_YEAR: 0,
            REASON_ACTIVE_DAYS: 0,
            REASON_SPEED: 0,
        }
    )
    users_in: int = 0
    users_removed: int = 0
    events_in: int = 0
    events_removed: int = 0
    speed_threshold_kmh: float | None = None
    removed_users: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        threshold = self.speed_threshold_kmh
        if threshold is not None and math.isinf(threshold):
            threshold = "inf"
        return {
            "reasons": dict(self.counts),
            "users_in": self.users_in,
            "users_removed": self.users_removed,
            "events_in": self.events_in,
            "events_removed": self.events_removed,
            "speed_threshold_kmh": threshold,
            "removed_users": list(self.removed_users),
        }


def _text_stream(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _skip_comments(lines: Iterable[str]) -> Iterable[str]:
    for line in lines:
        if line.startswith("#"):
            continue
        yield line


def parse_events(source, fmt: str = "csv") -> tuple[list[GeoEvent], int]:
    """Read events from a path, bytes or file object.

    Returns the events in file order together with the number of rows that
    were skipped as malformed. Lines starting with ``#`` are provenance
    comments and ignored.
    """
    if fmt != "csv":
        raise FormatError(f"unsupported event format: {fmt!r}")
    stream, owned = _text_stream(source)
    try:
        reader = csv.reader(_skip_comments(stream))
        header = next(reader, None)
        if header is None:
            raise FormatError("event file is empty (missing header)")
        if [h.strip() for h in header] != EVENT_COLUMNS:
            raise FormatError(f"expected header {','.join(EVENT_COLUMNS)}, got {','.join(header)}")
        events: list[GeoEvent] = []
        skipped = 0
        for row in reader:
            if not row:
                continue
            try:
                if len(row) != 4:
                    raise ValueError("wrong field count")
                ev = GeoEvent(row[0], int(row[1]), float(row[2]), float(row[3]))
                if not (math.isfinite(ev.lon) and math.isfinite(ev.lat)):
                    raise ValueError("non-finite coordinate")
            except ValueError:
                skipped += 1
                continue
            events.append(ev)
        return events, skipped
    finally:
        if owned:
            stream.close()


def format_event_row(ev: GeoEvent) -> list[str]:
    return [ev.user_id, str(ev.timestamp), repr(ev.lon), repr(ev.lat)]


def write_events(path, events: Iterable[GeoEvent], header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        for ev in events:
            writer.writerow(format_event_row(ev))


def dedupe(events: Sequence[GeoEvent]) -> list[GeoEvent]:
    """Drop repeated (user, timestamp, lon, lat) records, keeping first occurrences."""
    seen: set[tuple] = set()
    out = []
    for ev in events:
        k = ev.key
        if k in seen:
            continue
        seen.add(k)
        out.append(ev)
    return out


def consecutive_speeds(events: Sequence[GeoEvent]) -> np.ndarray:
    """Speeds in km/h between consecutive events of one time-sorted user track.

    A zero time step with nonzero displacement yields ``inf``; a zero step
    without displacement yields 0.
    """
    if len(events) < 2:
        raise ValueError("need at least two events")
    ts = np.array([e.timestamp for e in events], dtype=np.int64)
    if np.any(np.diff(ts) < 0):
        raise ValueError("events must be sorted by timestamp")
    lon = np.array([e.lon for e in events])
    lat = np.array([e.lat for e in events])
    dist = haversine_km(lon[:-1], lat[:-1], lon[1:], lat[1:])
    hours = np.diff(ts).astype(np.float64) / 3600.0
    speeds = np.empty_like(dist)
    moving = hours > 0
    speeds[moving] = dist[moving] / hours[moving]
    still = ~moving
    speeds[still] = np.where(dist[still] > 0, np.inf, 0.0)
    return speeds


def _group_by_user(events: Iterable[GeoEvent]) -> dict[str, list[GeoEvent]]:
    groups: dict[str, list[GeoEvent]] = defaultdict(list)
    for ev in events:
        groups[ev.user_id].append(ev)
    return groups


def _track_order(ev: GeoEvent) -> tuple:
    return (ev.timestamp, ev.lon, ev.lat)


def user_stats(user_id: str, events: Sequence[GeoEvent]) -> UserStats:
    track = sorted(events, key=_track_order)
    per_year: dict[int, int] = defaultdict(int)
    days = set()
    for ev in track:
        dt = datetime.fromtimestamp(ev.timestamp, tz=timezone.utc)
        per_year[dt.year] += 1
        days.add(ev.timestamp // 86400)
    max_speed = float(consecutive_speeds(track).max()) if len(track) > 1 else 0.0
    return UserStats(user_id, dict(sorted(per_year.items())), len(days), max_speed)


def compute_user_stats(events: Iterable[GeoEvent], executor=None) -> dict[str, UserStats]:
    groups = _group_by_user(events)
    users = sorted(groups)
    if executor is None:
        stats = [user_stats(u, groups[u]) for u in users]
    else:
        stats = list(executor.map(lambda u: user_stats(u, groups[u]), users))
    return {s.user_id: s for s in stats}


def speed_threshold(stats: Iterable[UserStats] | dict[str, UserStats], speed_percentile: float) -> float:
    """Nearest-rank quantile of per-user maximum speeds (``inf`` sorts last)."""
    if isinstance(stats, dict):
        stats = stats.values()
    population = sorted(s.max_speed for s in stats)
    if not population:
        raise ValueError("empty speed population")
    if not 0.0 < speed_percentile <= 1.0:
        raise ValueError("speed_percentile must lie in (0, 1]")
    n = len(population)
    # exact decimal product keeps ceil(0.99 * 100) at 99
    rank = int((Decimal(repr(speed_percentile)) * n).to_integral_value(rounding=ROUND_CEILING))
    rank = min(max(rank, 1), n)
    return population[rank - 1]


def filter_users(
    events: Sequence[GeoEvent], policy: FilterPolicy | None = None, executor=None
) -> tuple[list[GeoEvent], RejectionReport]:
    """Remove every event of users failing any quality rule.

    A user is rejected when all of their calendar years fall below
    ``min_events_per_year``, when they were active on fewer than
    ``min_active_days`` distinct UTC dates, or when their maximum
    consecutive speed exceeds the population speed percentile.
    """
    policy = policy or FilterPolicy()
    report = RejectionReport()
    report.events_in = len(events)
    if policy.bounding_box is not None:
        bbox = policy.bounding_box
        inside = [ev for ev in events if bbox.contains(ev.lon, ev.lat)]
        report.counts[REASON_BBOX] = len(events) - len(inside)
        events = inside
    stats = compute_user_stats(events, executor)
    report.users_in = len(stats)
    if not stats:
        report.events_removed = report.events_in - len(events)
        return list(events), report

    threshold = speed_threshold(stats, policy.speed_percentile)
    report.speed_threshold_kmh = threshold
    removed = set()
    for uid, st in stats.items():
        failed = False
        if all(n < policy.min_events_per_year for n in st.events_per_year.values()):
            report.counts[REASON_EVENTS_PER_YEAR] += 1
            failed = True
        if st.active_days < policy.min_active_days:
            report.counts[REASON_ACTIVE_DAYS] += 1
            failed = True
        if st.max_speed > threshold:
            report.counts[REASON_SPEED] += 1
            failed = True
        if failed:
            removed.add(uid)
    kept = [ev for ev in events if ev.user_id not in removed]
    report.users_removed = len(removed)
    report.removed_users = sorted(removed)
    report.events_removed = report.events_in - len(kept)
    return kept, report
