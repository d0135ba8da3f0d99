"""INI-style pipeline configuration with per-city sections.

Example::

    [global]
    workdir = out

    [city:CH]
    events = ch_events.csv
    parcels = ch_parcels.geojson
    legend = ch_legend.csv
    tz_offset_hours = -6
    signature_classes = 1,4,6,8,9

    [synth:CH]
    seed = 7
    n_users = 2000

    [similarity]
    cities = CH,SD
    classes = 1,4,6,8,9

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .ingest import BoundingBox, FilterPolicy
from .keylocations import DbscanParams
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


def _int_list(text: str | None) -> list[int] | None:
    if text is None or not text.strip():
        return None
    return [int(t) for t in text.replace(" ", "").split(",") if t]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


@dataclass
class CityConfig:
    city_tag: str
    events_path: Path
    parcels_path: Path
    legend_path: Path
    tz_offset_hours: int = 0
    bounding_box: BoundingBox | None = None
    policy: FilterPolicy = field(default_factory=FilterPolicy)
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    signature_classes: list[int] | None = None
    weekdays_only: bool = True
    normalization: str = "sum"
    # directory that relative paths were resolved against; keeps digests location-independent
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not -12 <= self.tz_offset_hours <= 14:
            raise ConfigError(f"{self.city_tag}: tz_offset_hours must lie in [-12, 14]")
        for name in ("events_path", "parcels_path", "legend_path"):
            if not str(getattr(self, name)):
                raise ConfigError(f"{self.city_tag}: {name} must not be empty")
        if self.normalization not in ("sum", "max"):
            raise ConfigError(f"{self.city_tag}: normalization must be 'sum' or 'max'")

    def _path_key(self, p: Path) -> str:
        if self.base_dir is not None:
            try:
                return Path(p).relative_to(self.base_dir).as_posix()
            except ValueError:
                pass
        return str(p)

    def digest(self) -> str:
        payload = {
            "city": self.city_tag,
            "events": self._path_key(self.events_path),
            "parcels": self._path_key(self.parcels_path),
            "legend": self._path_key(self.legend_path),
            "tz": self.tz_offset_hours,
            "bbox": asdict(self.bounding_box) if self.bounding_box else None,
            "policy": {
                "min_events_per_year": self.policy.min_events_per_year,
                "min_active_days": self.policy.min_active_days,
                "speed_percentile": self.policy.speed_percentile,
            },
            "dbscan": asdict(self.dbscan),
            "classes": self.signature_classes,
            "weekdays_only": self.weekdays_only,
            "normalization": self.normalization,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SimilarityConfig:
    cities: list[str] | None = None
    classes: list[int] | None = None
    band: int | None = None


@dataclass
class PipelineConfig:
    workdir: Path
    cities: dict[str, CityConfig]
    synth: dict[str, SynthConfig]
    similarity: SimilarityConfig
    threads: int | None = None
    source: Path | None = None

    def city(self, tag: str) -> CityConfig:
        try:
            return self.cities[tag]
        except KeyError:
            raise ConfigError(f"unknown city {tag!r}; configured: {', '.join(self.cities) or 'none'}") from None


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _parse_synth(tag: str, sec: configparser.SectionProxy) -> SynthConfig:
    kwargs: dict = {"city_tag": tag}
    types = {f.name: f.type for f in fields(SynthConfig)}
    for key, raw in sec.items():
        if key not in types:
            raise ConfigError(f"synth:{tag}: unknown key {key!r}")
        if key in ("class_mix", "class_preference"):
            kwargs[key] = tuple(_float_list(raw))
        elif key == "class_hour_profile":
            rows = [r for r in raw.split(";") if r.strip()]
            kwargs[key] = [_float_list(r) for r in rows]
        elif key in ("seed", "grid", "n_users", "min_events_per_anchor", "tz_offset_hours"):
            kwargs[key] = int(raw)
        elif key in ("start_date", "end_date", "city_tag"):
            kwargs[key] = raw.strip()
        else:
            kwargs[key] = float(raw)
    try:
        return SynthConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"synth:{tag}: {exc}") from exc


def _parse_city(tag: str, sec: configparser.SectionProxy, base: Path) -> CityConfig:
    for key in ("events", "parcels", "legend"):
        if not sec.get(key):
            raise ConfigError(f"city:{tag}: missing required key {key!r}")
    bbox = BoundingBox.parse(sec["bbox"]) if sec.get("bbox") else None
    try:
        policy = FilterPolicy(
            min_events_per_year=sec.getint("min_events_per_year", 10),
            min_active_days=sec.getint("min_active_days", 30),
            speed_percentile=sec.getfloat("speed_percentile", 0.99),
            bounding_box=bbox,
        )
        db = DbscanParams(eps=sec.getfloat("eps", 0.00225), min_pts=sec.getint("min_pts", 3))
    except ValueError as exc:
        raise ConfigError(f"city:{tag}: {exc}") from exc
    return CityConfig(
        city_tag=tag,
        events_path=_resolve(base, sec["events"]),
        parcels_path=_resolve(base, sec["parcels"]),
        legend_path=_resolve(base, sec["legend"]),
        tz_offset_hours=sec.getint("tz_offset_hours", 0),
        bounding_box=bbox,
        policy=policy,
        dbscan=db,
        signature_classes=_int_list(sec.get("signature_classes")),
        weekdays_only=sec.getboolean("weekdays_only", True),
        normalization=sec.get("normalization", "sum").strip(),
        base_dir=base,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path, encoding="utf-8")
    base = path.parent
    workdir = _resolve(base, parser.get("global", "workdir", fallback="out"))
    threads = parser.getint("global", "threads", fallback=None) if parser.has_section("global") else None
    cities: dict[str, CityConfig] = {}
    synth: dict[str, SynthConfig] = {}
    for name in parser.sections():
        if name.startswith("city:"):
            tag = name.split(":", 1)[1].strip()
            cities[tag] = _parse_city(tag, parser[name], base)
        elif name.startswith("synth:"):
            tag = name.split(":", 1)[1].strip()
            synth[tag] = _parse_synth(tag, parser[name])
        elif name not in ("global", "similarity"):
            raise ConfigError(f"unknown config section [{name}]")
    sim = SimilarityConfig()
    if parser.has_section("similarity"):
        s = parser["similarity"]
        if s.get("cities"):
            sim.cities = [c.strip() for c in s["cities"].split(",") if c.strip()]
        sim.classes = _int_list(s.get("classes"))
        band = s.get("band")
        sim.band = int(band) if band and band.strip() else None
    return PipelineConfig(workdir, cities, synth, sim, threads, path)
