"""File-based pipeline stages, one function per CLI subcommand."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .config import CityConfig, PipelineConfig
from .ingest import dedupe, filter_users, parse_events, write_events
from .join import join_events, read_joined, write_joined
from .keylocations import (
    key_locations_by_user,
    rank_composition,
    rank_user_counts,
    read_key_locations,
    write_key_locations,
)
from .landuse import build_index, class_area_weights, load_legend, load_parcels
from .landuse.parcels import N_CLASSES, parcels_to_geojson, write_legend
from .metrics import (
    hourly_signature,
    locational_bias,
    read_signatures,
    twitter_class_weights,
    write_signatures,
    write_weight_pairs,
)
from .similarity import (
    agglomerative_cluster,
    dendrogram_to_newick,
    distance_matrix,
    write_distance_matrix,
)
from .synth import generate_city, generate_events, save_truth

log = logging.getLogger(__name__)

FILTERED = "filtered.csv"
REJECTIONS = "rejections.json"
JOINED = "joined.csv"
KEYLOCS = "keylocations.csv"
BIAS = "bias.json"
WEIGHTS = "weights.csv"
SIGNATURES = "signatures.csv"
RANKPLOT = "rankplot.csv"
TRUTH = "truth.json"
SIMILARITY_DIR = "similarity"

# stage that produces each intermediate file
_PRODUCER = {FILTERED: "filter", JOINED: "join", KEYLOCS: "cluster", SIGNATURES: "signatures"}


class StageError(RuntimeError):
    """An upstream artifact is missing or unusable."""


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def provenance(stage: str, digest: str) -> str:
    return f"# geosignature {__version__} stage={stage} config={digest}"


@contextmanager
def _pool(threads: int):
    if threads <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex


def city_dir(cfg: PipelineConfig, city: CityConfig) -> Path:
    d = cfg.workdir / city.city_tag
    d.mkdir(parents=True, exist_ok=True)
    return d


def _need(path: Path, name: str | None = None) -> Path:
    if not path.exists():
        stage = _PRODUCER.get(name or path.name)
        hint = f"; run stage '{stage}' first" if stage else ""
        raise StageError(f"missing input {path}{hint}")
    return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def cmd_filter(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> dict:
    src = _need(city.events_path)
    events, skipped = parse_events(src)
    events = dedupe(events)
    n_dedup = len(events)
    with _pool(threads) as ex:
        kept, report = filter_users(events, city.policy, executor=ex)
    out = city_dir(cfg, city)
    write_events(out / FILTERED, kept, provenance("filter", city.digest()))
    payload = {"provenance": provenance("filter", city.digest())[2:], "city": city.city_tag,
               "malformed_rows": skipped, "events_after_dedupe": n_dedup}
    payload.update(report.to_json())
    _write_json(out / REJECTIONS, payload)
    log.info("%s: kept %d of %d events", city.city_tag, len(kept), n_dedup)
    return payload


def _load_city_parcels(city: CityConfig):
    legend = load_legend(_need(city.legend_path))
    parcels, report = load_parcels(_need(city.parcels_path), legend)
    if report.unmapped or report.invalid:
        log.warning("%s: skipped %d unmapped and %d invalid parcels", city.city_tag, report.unmapped, report.invalid)
    if not parcels:
        raise ValueError(f"{city.city_tag}: no usable parcels")
    return parcels


def cmd_join(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> int:
    out = city_dir(cfg, city)
    events, _ = parse_events(_need(out / FILTERED))
    index = build_index(_load_city_parcels(city))
    joined = join_events(events, index, threads=threads)
    write_joined(out / JOINED, joined, provenance("join", city.digest()))
    return len(joined)


def cmd_cluster(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> int:
    out = city_dir(cfg, city)
    joined = read_joined(_need(out / JOINED))
    with _pool(threads) as ex:
        kls = key_locations_by_user(joined, city.dbscan, executor=ex)
    write_key_locations(out / KEYLOCS, kls, provenance("cluster", city.digest()))
    return len(kls)


def cmd_bias(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> dict:
    out = city_dir(cfg, city)
    kls = read_key_locations(_need(out / KEYLOCS))
    report = locational_bias(twitter_class_weights(kls), class_area_weights(_load_city_parcels(city)))
    payload = {"provenance": provenance("bias", city.digest())[2:]}
    payload.update(report.to_json(city.city_tag))
    _write_json(out / BIAS, payload)
    write_weight_pairs(out / WEIGHTS, report, provenance("bias", city.digest()))
    return payload


def cmd_signatures(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> int:
    out = city_dir(cfg, city)
    joined = read_joined(_need(out / JOINED))
    explicit = city.signature_classes is not None
    classes = city.signature_classes or sorted({e.activity_class for e in joined})
    sigs = []
    for c in classes:
        try:
            sigs.append(
                hourly_signature(joined, c, city.tz_offset_hours, city.weekdays_only, city.city_tag, city.normalization)
            )
        except ValueError:
            if explicit:
                raise
            log.warning("%s: class %d has no weekday events; no signature", city.city_tag, c)
    write_signatures(out / SIGNATURES, sigs, provenance("signatures", city.digest()))
    return len(sigs)


def cmd_rankplot(cfg: PipelineConfig, city: CityConfig, threads: int = 1) -> int:
    out = city_dir(cfg, city)
    kls = read_key_locations(_need(out / KEYLOCS))
    comp = rank_composition(kls)
    users = rank_user_counts(kls)
    with open(out / RANKPLOT, "w", encoding="utf-8", newline="") as fh:
        fh.write(provenance("rankplot", city.digest()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "n_users"] + [f"class_{c}" for c in range(1, N_CLASSES + 1)])
        for r, vec in comp.items():
            w.writerow([r, users[r]] + [repr(v) for v in vec])
    return len(comp)


def cmd_similarity(
    cfg: PipelineConfig, inputs: list[Path] | None = None, classes: list[int] | None = None,
    band: int | None = None, threads: int = 1,
) -> dict:
    if not inputs:
        tags = cfg.similarity.cities or list(cfg.cities)
        inputs = [_need(cfg.workdir / t / SIGNATURES, SIGNATURES) for t in tags]
    classes = classes if classes is not None else cfg.similarity.classes
    band = band if band is not None else cfg.similarity.band
    sigs = []
    for p in inputs:
        sigs.extend(read_signatures(_need(Path(p), SIGNATURES)))
    if classes is not None:
        sigs = [s for s in sigs if s.activity_class in classes]
    if len(sigs) < 2:
        raise ValueError("similarity needs at least two signatures")
    with _pool(threads) as ex:
        matrix = distance_matrix(sigs, band=band, executor=ex)
    tree = agglomerative_cluster(matrix)
    digest = _similarity_digest(cfg, inputs, classes, band)
    out = cfg.workdir / SIMILARITY_DIR
    out.mkdir(parents=True, exist_ok=True)
    write_distance_matrix(out / "distance_matrix.csv", matrix, provenance("similarity", digest))
    with open(out / "dendrogram.nwk", "w", encoding="utf-8") as fh:
        fh.write(f"[{provenance('similarity', digest)[2:]}]\n")
        fh.write(dendrogram_to_newick(tree) + "\n")
    _write_json(out / "merges.json", {"provenance": provenance("similarity", digest)[2:], "merges": tree.to_json()})
    return {"labels": matrix.labels, "merges": tree.to_json()}


def _similarity_digest(cfg: PipelineConfig, inputs, classes, band) -> str:
    payload = json.dumps(
        {"inputs": [Path(p).name for p in inputs], "classes": classes, "band": band,
         "cities": [cfg.cities[t].digest() for t in sorted(cfg.cities)]},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def cmd_synth(cfg: PipelineConfig, tag: str, seed: int | None = None, threads: int = 1) -> dict:
    """Write a synthetic corpus to the paths of city ``tag``."""
    if tag not in cfg.synth:
        raise ValueError(f"no [synth:{tag}] section in the config")
    sc = cfg.synth[tag]
    if seed is not None:
        sc.seed = seed
    city = cfg.city(tag)
    parcels, legend = generate_city(sc)
    with _pool(threads) as ex:
        corpus = generate_events(sc, parcels, executor=ex)
    for p in (city.events_path, city.parcels_path, city.legend_path):
        p.parent.mkdir(parents=True, exist_ok=True)
    write_events(city.events_path, corpus.events)
    with open(city.parcels_path, "w", encoding="utf-8") as fh:
        json.dump(parcels_to_geojson(parcels), fh)
        fh.write("\n")
    write_legend(city.legend_path, legend)
    save_truth(city_dir(cfg, city) / TRUTH, corpus, sc)
    return {"events": len(corpus.events), "parcels": len(parcels), "users": sc.n_users}


CITY_STAGES = [
    ("filter", cmd_filter),
    ("join", cmd_join),
    ("cluster", cmd_cluster),
    ("bias", cmd_bias),
    ("signatures", cmd_signatures),
    ("rankplot", cmd_rankplot),
]


def cmd_run(cfg: PipelineConfig, cities: list[str] | None = None, threads: int = 1) -> None:
    tags = cities or list(cfg.cities)
    for tag in tags:
        city = cfg.city(tag)
        for name, fn in CITY_STAGES:
            log.info("%s: %s", tag, name)
            fn(cfg, city, threads)
    n_sigs = sum(len(read_signatures(cfg.workdir / t / SIGNATURES)) for t in tags)
    if n_sigs >= 2:
        cmd_similarity(cfg, threads=threads)
