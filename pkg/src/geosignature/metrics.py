"""Locational-bias regression and hourly temporal signatures."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .join import JoinedEvent
from .keylocations import KeyLocation

HOURS = 24
SIGNATURE_COLUMNS = ["city", "activity_class"] + [f"h{h}" for h in range(HOURS)]
WEIGHT_COLUMNS = ["activity_class", "twitter_weight", "map_weight"]


@dataclass(frozen=True)
class WeightPair:
    activity_class: int
    twitter_weight: float
    map_weight: float


@dataclass
class BiasReport:
    pairs: list[WeightPair]
    slope: float
    intercept: float
    r_squared: float
    n: int
    # classes seen in the Twitter data that occupy no map area
    anomalies: list[int] = field(default_factory=list)

    def to_json(self, city: str) -> dict:
        return {
            "city": city,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n": self.n,
            "pairs": [
                {"class": p.activity_class, "twitter_weight": p.twitter_weight, "map_weight": p.map_weight}
                for p in self.pairs
            ],
            "anomalies": list(self.anomalies),
        }


@dataclass
class Signature:
    activity_class: int
    city_tag: str
    values: np.ndarray
    normalization: str = "sum"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (HOURS,):
            raise ValueError("a signature has exactly 24 hourly values")
        if np.any(self.values < 0):
            raise ValueError("signature values must be non-negative")
        if self.normalization == "sum" and abs(self.values.sum() - 1.0) > 1e-9:
            raise ValueError("sum-normalized signature must sum to 1")

    @property
    def label(self) -> str:
        return f"{self.city_tag}_{self.activity_class}"


def twitter_class_weights(key_locations: Iterable[KeyLocation]) -> dict[int, float]:
    counts = Counter(kl.dominant_class for kl in key_locations)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no key locations")
    return {c: counts[c] / total for c in sorted(counts)}


def ols(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Simple least squares with intercept: (slope, intercept, r²)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 3:
        raise ValueError("need at least three points for the regression")
    mx = x.mean()
    my = y.mean()
    dx = x - mx
    dy = y - my
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    sxy = float(dx @ dy)
    if sxx == 0.0:
        raise ValueError("map weights have zero variance")
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0.0:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, (sxy * sxy) / (sxx * syy)))
    return slope, float(intercept), r2


def locational_bias(twitter_weights: Mapping[int, float], map_weights: Mapping[int, float]) -> BiasReport:
    """Regress Twitter class weights (y) on map area weights (x).

    Only classes with positive map area enter the fit; a class missing from
    the Twitter side counts as zero.
    """
    classes = sorted(c for c, w in map_weights.items() if w > 0)
    pairs = [WeightPair(c, float(twitter_weights.get(c, 0.0)), float(map_weights[c])) for c in classes]
    anomalies = sorted(c for c, w in twitter_weights.items() if w > 0 and map_weights.get(c, 0.0) <= 0)
    slope, intercept, r2 = ols([p.map_weight for p in pairs], [p.twitter_weight for p in pairs])
    return BiasReport(pairs, slope, intercept, r2, len(pairs), anomalies)


def local_hours_and_weekdays(timestamps, tz_offset_hours: float) -> tuple[np.ndarray, np.ndarray]:
    """Local hour of day and weekday (Monday = 0) for UTC epoch seconds."""
    local = np.asarray(timestamps, dtype=np.int64) + int(round(tz_offset_hours * 3600))
    days = np.floor_divide(local, 86400)
    hours = np.floor_divide(local - days * 86400, 3600)
    # 1970-01-01 was a Thursday
    weekdays = (days + 3) % 7
    return hours, weekdays


def hourly_signature(
    events: Iterable[JoinedEvent],
    activity_class: int,
    tz_offset_hours: float = 0.0,
    weekdays_only: bool = True,
    city_tag: str = "",
    normalization: str = "sum",
) -> Signature:
    if not -12 <= tz_offset_hours <= 14:
        raise ValueError("tz offset must lie in [-12, 14]")
    ts = [e.timestamp for e in events if e.activity_class == activity_class]
    hours, weekdays = local_hours_and_weekdays(ts, tz_offset_hours)
    if weekdays_only:
        hours = hours[weekdays < 5]
    counts = np.bincount(hours, minlength=HOURS).astype(np.float64)
    return signature_from_counts(counts, activity_class, city_tag, normalization)


def signature_from_counts(counts, activity_class: int, city_tag: str = "", normalization: str = "sum") -> Signature:
    counts = np.asarray(counts, dtype=np.float64)
    if counts.sum() <= 0:
        raise ValueError(f"no events for activity class {activity_class}; signature undefined")
    if normalization == "sum":
        values = counts / counts.sum()
    elif normalization == "max":
        values = counts / counts.max()
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return Signature(activity_class, city_tag, values, normalization)


def write_signatures(path, signatures: Iterable[Signature], header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIGNATURE_COLUMNS)
        for s in signatures:
            w.writerow([s.city_tag, s.activity_class] + [repr(float(v)) for v in s.values])


def read_signatures(path) -> list[Signature]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header != SIGNATURE_COLUMNS:
            raise ValueError(f"unexpected signature header: {header}")
        out = []
        for row in reader:
            if not row:
                continue
            values = np.array([float(v) for v in row[2:]])
            norm = "sum" if abs(values.sum() - 1.0) <= 1e-9 else "max"
            out.append(Signature(int(row[1]), row[0], values, norm))
        return out


def write_weight_pairs(path, report: BiasReport, header_line: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEIGHT_COLUMNS)
        for p in report.pairs:
            w.writerow([p.activity_class, repr(p.twitter_weight), repr(p.map_weight)])

