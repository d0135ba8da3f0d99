"""Command-line entry point: ``geosignature <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .ingest import FormatError
from .keylocations import DbscanParams
from .pipeline import (
    CITY_STAGES,
    StageError,
    cmd_run,
    cmd_similarity,
    cmd_synth,
    default_threads,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

log = logging.getLogger("geosignature")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline config file")
    common.add_argument("--threads", type=int, default=None, help="worker count (default: available CPUs)")
    common.add_argument("--workdir", type=Path, help="override [global] workdir")
    common.add_argument("--city", action="append", help="restrict to a city tag (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    over = common.add_argument_group("config overrides")
    over.add_argument("--tz-offset", type=int, dest="tz_offset_hours")
    over.add_argument("--eps", type=float)
    over.add_argument("--min-pts", type=int)
    over.add_argument("--min-events-per-year", type=int)
    over.add_argument("--min-active-days", type=int)
    over.add_argument("--speed-percentile", type=float)
    over.add_argument("--classes", type=_int_list, help="activity classes for signatures/similarity, e.g. 1,4,6")
    over.add_argument("--normalization", choices=["sum", "max"])
    over.add_argument("--all-days", action="store_true", help="include weekends in signatures")

    parser = _Parser(prog="geosignature", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, _ in CITY_STAGES:
        sub.add_parser(name, parents=[common])
    sim = sub.add_parser("similarity", parents=[common])
    sim.add_argument("--inputs", nargs="+", type=Path, help="signature CSVs (default: per-city outputs)")
    sim.add_argument("--band", type=int, help="Sakoe-Chiba band width for DTW")
    syn = sub.add_parser("synth", parents=[common])
    syn.add_argument("--seed", type=int, help="override the synth seed")
    sub.add_parser("run", parents=[common])
    return parser


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.workdir is not None:
        cfg.workdir = args.workdir
    for tag, city in list(cfg.cities.items()):
        policy = city.policy
        for key in ("min_events_per_year", "min_active_days", "speed_percentile"):
            value = getattr(args, key)
            if value is not None:
                policy = replace(policy, **{key: value})
        db = city.dbscan
        if args.eps is not None or args.min_pts is not None:
            db = DbscanParams(eps=args.eps if args.eps is not None else db.eps,
                              min_pts=args.min_pts if args.min_pts is not None else db.min_pts)
        changes = {"policy": policy, "dbscan": db}
        if args.tz_offset_hours is not None:
            changes["tz_offset_hours"] = args.tz_offset_hours
        if args.classes is not None:
            changes["signature_classes"] = args.classes
        if args.normalization is not None:
            changes["normalization"] = args.normalization
        if args.all_days:
            changes["weekdays_only"] = False
        cfg.cities[tag] = replace(city, **changes)
    if args.classes is not None:
        cfg.similarity.classes = args.classes
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ConfigError, ValueError) as exc:
        print(f"geosignature: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    threads = args.threads or cfg.threads or default_threads()
    if threads < 1:
        print("geosignature: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE

    try:
        tags = args.city or None
        if args.command == "run":
            cmd_run(cfg, tags, threads)
        elif args.command == "synth":
            for tag in tags or list(cfg.synth):
                print(json.dumps({"city": tag, **cmd_synth(cfg, tag, args.seed, threads)}))
        elif args.command == "similarity":
            result = cmd_similarity(cfg, args.inputs, args.classes, args.band, threads)
            print(json.dumps({"labels": result["labels"]}))
        else:
            stage = dict(CITY_STAGES)[args.command]
            for tag in tags or list(cfg.cities):
                result = stage(cfg, cfg.city(tag), threads)
                if isinstance(result, dict):
                    print(json.dumps({"city": tag, **result}, default=str))
                else:
                    print(json.dumps({"city": tag, "rows": result}))
    except ConfigError as exc:
        print(f"geosignature: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StageError, FormatError, ValueError, OSError) as exc:
        print(f"geosignature: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
