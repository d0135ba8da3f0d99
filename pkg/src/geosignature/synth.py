"""Synthetic cities and event streams with planted ground truth.

The generator lays a square grid of parcels, assigns activity classes by
largest-remainder apportionment, and gives each user two to five anchor
locations. Events are jittered around anchors closely enough that DBSCAN at
the default parameters recovers every anchor as one key location.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date
from typing import Sequence

import numpy as np

from .ingest import GeoEvent
from .landuse.parcels import N_CLASSES, ActivityLegend, Parcel

DEFAULT_EPS = 0.00225

# Rough share of surface area per class, residential dominant.
DEFAULT_CLASS_MIX = (0.40, 0.03, 0.04, 0.05, 0.04, 0.12, 0.06, 0.05, 0.08, 0.06, 0.04, 0.03)


def _bump(center: float, width: float) -> np.ndarray:
    h = np.arange(24, dtype=np.float64)
    d = np.minimum(np.abs(h - center), 24 - np.abs(h - center))
    return np.exp(-0.5 * (d / width) ** 2)


def _default_profiles() -> list[list[float]]:
    base = 0.02
    profiles = {
        1: 0.6 * _bump(21, 2.5) + 0.3 * _bump(7, 1.5),  # residential: evening plus early morning
        4: np.where(np.arange(24) < 8, 0.05, np.where(np.arange(24) <= 15, 1.0, 0.0))
        + np.where(np.arange(24) > 15, np.exp(-1.2 * (np.arange(24) - 15)), 0.0),  # educational
        6: _bump(12.5, 3.0) * 0.8 + 0.4 * _bump(9, 1.0),  # work: daytime with morning spike
        8: _bump(11, 1.5),  # civic: narrow late-morning peak
        9: _bump(17, 2.0) + 0.5 * _bump(13, 1.0),  # shopping: afternoon
    }
    out = []
    for c in range(1, N_CLASSES + 1):
        if c in profiles:
            p = profiles[c] + base
        else:
            p = _bump(8 + c, 3.0) + base
        out.append((p / p.sum()).tolist())
    return out


@dataclass
class SynthConfig:
    seed: int = 0
    grid: int = 20
    class_mix: Sequence[float] = DEFAULT_CLASS_MIX
    class_preference: Sequence[float] = (1.0,) * N_CLASSES
    class_hour_profile: Sequence[Sequence[float]] = field(default_factory=_default_profiles)
    n_users: int = 1000
    events_per_user: float = 60.0
    noise_fraction: float = 0.0
    # extra knobs not tied to the bias model
    min_events_per_anchor: int = 3
    origin_lon: float = -87.80
    origin_lat: float = 41.80
    cell_deg: float = 0.01
    eps: float = DEFAULT_EPS
    tz_offset_hours: int = -6
    start_date: str = "2014-01-01"
    end_date: str = "2014-12-31"
    city_tag: str = "SYN"

    def __post_init__(self) -> None:
        mix = np.asarray(self.class_mix, dtype=np.float64)
        if mix.shape != (N_CLASSES,) or np.any(mix < 0) or abs(mix.sum() - 1.0) > 1e-9:
            raise ValueError("class_mix must be 12 non-negative fractions summing to 1")
        pref = np.asarray(self.class_preference, dtype=np.float64)
        if pref.shape != (N_CLASSES,) or np.any(pref <= 0):
            raise ValueError("class_preference must be 12 positive multipliers")
        prof = np.asarray(self.class_hour_profile, dtype=np.float64)
        if prof.shape != (N_CLASSES, 24) or np.any(prof < 0) or np.any(prof.sum(axis=1) <= 0):
            raise ValueError("class_hour_profile must be 12 non-negative 24-hour vectors with positive sums")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ValueError("noise_fraction must lie in [0, 1)")
        if self.grid < 1 or self.n_users < 0 or self.events_per_user < 0:
            raise ValueError("grid, n_users and events_per_user must be positive")
        if self.cell_deg <= 2 * self.eps / 3:
            raise ValueError("cells must be wider than the jitter diameter")
        if self.min_events_per_anchor < 1:
            raise ValueError("min_events_per_anchor must be at least 1")

    def profiles(self) -> np.ndarray:
        prof = np.asarray(self.class_hour_profile, dtype=np.float64)
        return prof / prof.sum(axis=1, keepdims=True)

    def to_json(self) -> dict:
        d = asdict(self)
        d["class_mix"] = list(map(float, self.class_mix))
        d["class_preference"] = list(map(float, self.class_preference))
        d["class_hour_profile"] = [list(map(float, p)) for p in self.class_hour_profile]
        return d


def apportion(mix: Sequence[float], total: int) -> list[int]:
    """Largest-remainder integer split of ``total`` in proportion to ``mix``.

    Remainder ties go to the lower class index.
    """
    quotas = [m * total for m in mix]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(mix)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def synth_legend() -> ActivityLegend:
    return ActivityLegend({f"LU{c:02d}": c for c in range(1, N_CLASSES + 1)})


def generate_city(config: SynthConfig) -> tuple[list[Parcel], ActivityLegend]:
    """Square grid of parcels whose class counts follow ``class_mix``."""
    g = config.grid
    n = g * g
    positive = sum(1 for m in config.class_mix if m > 0)
    if n < positive:
        raise ValueError(f"a {g}x{g} grid cannot hold {positive} classes")
    counts = apportion(config.class_mix, n)
    classes = np.repeat(np.arange(1, N_CLASSES + 1), counts)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    classes = classes[rng.permutation(n)]
    legend = synth_legend()
    parcels = []
    step = config.cell_deg
    for k in range(n):
        row, col = divmod(k, g)
        x0 = round(config.origin_lon + col * step, 9)
        y0 = round(config.origin_lat + row * step, 9)
        x1 = round(x0 + step, 9)
        y1 = round(y0 + step, 9)
        ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
        cls = int(classes[k])
        parcels.append(Parcel.from_rings(f"P{k:06d}", [ring], f"LU{cls:02d}", cls))
    return parcels, legend


@dataclass
class Anchor:
    lon: float
    lat: float
    parcel_id: str
    activity_class: int
    n_events: int


@dataclass
class SynthCorpus:
    events: list[GeoEvent]
    truth: dict[str, list[Anchor]]

    def truth_json(self, config: SynthConfig) -> dict:
        return {
            "config": config.to_json(),
            "users": {
                u: [asdict(a) for a in anchors] for u, anchors in sorted(self.truth.items())
            },
        }


def _weekday_days(start: str, end: str) -> np.ndarray:
    d0 = date.fromisoformat(start).toordinal()
    d1 = date.fromisoformat(end).toordinal()
    days = np.arange(d0, d1 + 1)
    epoch = date(1970, 1, 1).toordinal()
    days = days - epoch
    return days[(days + 3) % 7 < 5]


def _grid_cell(config: SynthConfig, lon: float, lat: float) -> int:
    g = config.grid
    col = min(max(int(math.floor((lon - config.origin_lon) / config.cell_deg)), 0), g - 1)
    row = min(max(int(math.floor((lat - config.origin_lat) / config.cell_deg)), 0), g - 1)
    return row * g + col


def _user_events(
    config: SynthConfig,
    uid: str,
    seed_seq: np.random.SeedSequence,
    parcels: Sequence[Parcel],
    parcel_probs: np.ndarray,
    profiles: np.ndarray,
    weekdays: np.ndarray,
) -> tuple[list[GeoEvent], list[Anchor]]:
    rng = np.random.default_rng(seed_seq)
    eps = config.eps
    jitter = eps / 3.0
    margin = jitter * 1.01
    min_sep = 2.0 * eps
    n_anchors = int(rng.integers(2, 6))
    anchors: list[Anchor] = []
    per_anchor_mean = config.events_per_user / n_anchors
    attempts = 0
    while len(anchors) < n_anchors:
        attempts += 1
        if attempts > 1000:
            raise RuntimeError("could not place separated anchors; enlarge the grid")
        k = int(rng.choice(len(parcels), p=parcel_probs))
        p = parcels[k]
        minx, miny, maxx, maxy = p.bounds
        lon = float(rng.uniform(minx + margin, maxx - margin))
        lat = float(rng.uniform(miny + margin, maxy - margin))
        if any(math.hypot(lon - a.lon, lat - a.lat) < min_sep for a in anchors):
            continue
        count = max(config.min_events_per_anchor, int(rng.poisson(per_anchor_mean)))
        anchors.append(Anchor(lon, lat, p.parcel_id, p.activity_class, count))

    tz = int(round(config.tz_offset_hours * 3600))
    city_w = config.grid * config.cell_deg
    events = []
    for a in anchors:
        m = a.n_events
        r = jitter * np.sqrt(rng.uniform(0.0, 1.0, m))
        theta = rng.uniform(0.0, 2 * math.pi, m)
        lons = a.lon + r * np.cos(theta)
        lats = a.lat + r * np.sin(theta)
        classes = np.full(m, a.activity_class)
        if config.noise_fraction > 0:
            noisy = rng.uniform(0.0, 1.0, m) < config.noise_fraction
            k = int(noisy.sum())
            lons[noisy] = config.origin_lon + rng.uniform(0.0, city_w, k)
            lats[noisy] = config.origin_lat + rng.uniform(0.0, city_w, k)
            for i in np.flatnonzero(noisy):
                classes[i] = parcels[_grid_cell(config, lons[i], lats[i])].activity_class
        days = weekdays[rng.integers(0, len(weekdays), m)]
        u = rng.uniform(0.0, 1.0, m)
        cdf = np.cumsum(profiles[classes - 1], axis=1)
        hours = np.minimum((u[:, None] >= cdf).sum(axis=1), 23).astype(np.int64)
        secs = rng.integers(0, 3600, m)
        local = days * 86400 + hours * 3600 + secs
        utc = local - tz
        for t, x, y in zip(utc.tolist(), lons.tolist(), lats.tolist()):
            events.append(GeoEvent(uid, int(t), round(x, 7), round(y, 7)))
    events.sort(key=lambda e: (e.timestamp, e.lon, e.lat))
    return events, anchors


def generate_events(config: SynthConfig, parcels: Sequence[Parcel], executor=None) -> SynthCorpus:
    """Events for ``config.n_users`` users, sorted by (user_id, timestamp).

    Each user draws from an independent child of the seed sequence, so the
    output does not depend on how users are scheduled across workers.
    """
    pref = np.asarray(config.class_preference, dtype=np.float64)
    weights = np.array([p.area * pref[p.activity_class - 1] for p in parcels])
    probs = weights / weights.sum()
    profiles = config.profiles()
    weekdays = _weekday_days(config.start_date, config.end_date)
    children = np.random.SeedSequence([config.seed, 1]).spawn(config.n_users)
    width = max(6, len(str(config.n_users)))
    uids = [f"u{i:0{width}d}" for i in range(config.n_users)]

    def one(i: int):
        return _user_events(config, uids[i], children[i], parcels, probs, profiles, weekdays)

    if executor is None:
        results = [one(i) for i in range(config.n_users)]
    else:
        results = list(executor.map(one, range(config.n_users)))
    events = [e for evs, _ in results for e in evs]
    truth = {uids[i]: anchors for i, (_, anchors) in enumerate(results)}
    return SynthCorpus(events, truth)


def save_truth(path, corpus: SynthCorpus, config: SynthConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus.truth_json(config), fh, indent=1, sort_keys=True)
        fh.write("\n")
