"""Command-line entry point.

Exit codes: 0 success, 1 pre-flight failure, 2 stopped mid-run with partial
state saved, 3 invalid arguments.
"""

from __future__ import annotations

import argparse
import dataclasses
import functools
import json
import resource
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import eligibility, replay, stylized, synth
from .engines import EngineParams
from .errors import ElpriskError, NoResolvedMarkets, OutOfRange, UnknownAxis
from .estimators import HazardTable, load_news_windows, load_resolutions
from .funding import FundingParams
from .index import IndexParams
from .ingest import reconstruction_agreement
from .liquidation import LiquidationParams
from .margin import MarginParams
from .marketpath import MarketData, load_markets, load_metadata
from .provenance import dumps, provenance_block

EXIT_OK = 0
EXIT_PREFLIGHT = 1
EXIT_STOPPED = 2
EXIT_USAGE = 3

_GROUPS = {"index": IndexParams, "margin": MarginParams, "funding": FundingParams, "liquidation": LiquidationParams}


class UsageError(Exception):
    pass


class PreflightError(Exception):
    pass


class Stopped(Exception):
    def __init__(self, reason: str, partial_path: Path):
        super().__init__(reason)
        self.reason = reason
        self.partial_path = partial_path


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------- configuration


def params_from_config(cfg: dict) -> EngineParams:
    """Engine parameters from the ``params`` block, with sweep ranges enforced."""
    block = cfg.get("params", {})
    if not isinstance(block, dict):
        raise UsageError("params must be an object")
    kwargs = {}
    top = {f.name for f in dataclasses.fields(EngineParams)} - set(_GROUPS)
    for key, value in block.items():
        if key in _GROUPS:
            cls = _GROUPS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(value) - names
            if unknown:
                raise UsageError(f"unknown {key} parameters {sorted(unknown)}")
            for axis in replay.AXES.values():
                if axis.group == key and axis.field in value:
                    axis.check(value[axis.field])
            try:
                kwargs[key] = cls(**value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{key}: {exc}") from exc
        elif key in top:
            kwargs[key] = value
        else:
            raise UsageError(f"unknown parameter {key!r}")
    return EngineParams(**kwargs)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise PreflightError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _sibling(events: str, kind: str) -> str | None:
    p = Path(events)
    cand = p.with_name(f"{p.stem}.{kind}.jsonl")
    return str(cand) if cand.exists() else None


def _inputs(args) -> tuple[list[MarketData], list[str]]:
    events = args.events or []
    if not events:
        raise UsageError("--events is required")
    for e in events:
        if not Path(e).exists():
            raise PreflightError(f"missing input {e}")
    res = args.resolutions or _sibling(events[0], "resolutions")
    meta = args.metadata or _sibling(events[0], "metadata")
    news = args.news or _sibling(events[0], "news")
    used = list(events)
    for p in (res, meta, news):
        if p is not None:
            if not Path(p).exists():
                raise PreflightError(f"missing input {p}")
            used.append(p)
    markets, _ = load_markets(
        events,
        load_resolutions(res) if res else None,
        load_metadata(meta) if meta else None,
        load_news_windows(news) if news else (),
    )
    if not markets:
        raise PreflightError("no markets in input")
    return markets, used


def _hazard(args) -> HazardTable | None:
    if args.hazard_constant is not None:
        if not 0.0 <= args.hazard_constant <= 1.0:
            raise UsageError("--hazard-constant must lie in [0, 1]")
        return HazardTable.constant(args.hazard_constant)
    if args.hazard:
        try:
            with open(args.hazard) as fh:
                return HazardTable.from_dict(json.load(fh))
        except OSError as exc:
            raise PreflightError(f"cannot read hazard table: {exc}") from exc
    return None


# ---------------------------------------------------------------- stop conditions


class StopMonitor:
    """Checks the stop file, peak memory and wall time every N markets or T seconds."""

    def __init__(self, stop_file: str | None, max_rss_gb: float | None, max_wall_min: float | None,
                 every_n: int = 100, every_s: float = 60.0):
        self.stop_file = stop_file
        self.max_rss_gb = max_rss_gb
        self.max_wall_min = max_wall_min
        self.every_n = max(1, every_n)
        self.every_s = every_s
        self.start = self.last_check = time.monotonic()
        self.processed = self.checked_at = 0

    def advance(self, n: int = 1) -> str | None:
        self.processed += n
        now = time.monotonic()
        if self.processed - self.checked_at < self.every_n and now - self.last_check < self.every_s:
            return None
        self.checked_at, self.last_check = self.processed, now
        return self.reason(now)

    def reason(self, now: float | None = None) -> str | None:
        now = time.monotonic() if now is None else now
        if self.stop_file and Path(self.stop_file).exists():
            return "stop_file"
        if self.max_rss_gb is not None:
            rss_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / (1024.0 ** 2)
            if rss_gb > self.max_rss_gb:
                return "max_rss"
        if self.max_wall_min is not None and (now - self.start) / 60.0 > self.max_wall_min:
            return "max_wall"
        return None


def _partial_path(args) -> Path:
    return Path(args.out + ".partial.json") if args.out else Path("partial_state.json")


def _run_cells(args, command: str, markets: Sequence[MarketData], cell_fn: Callable, prov: dict) -> list[dict]:
    done: set[str] = set()
    cells: list[dict] = []
    if args.resume:
        try:
            with open(args.resume) as fh:
                state = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PreflightError(f"cannot read partial state: {exc}") from exc
        if state.get("command") != command:
            raise PreflightError(f"partial state belongs to {state.get('command')!r}, not {command!r}")
        done = set(state["completed_markets"])
        cells = list(state["cells"])
    todo = [m for m in markets if m.market_id not in done]
    monitor = StopMonitor(args.stop_file, args.max_rss_gb, args.max_wall_min, args.check_every)
    width = max(1, args.parallelism)
    pool = ProcessPoolExecutor(width) if width > 1 else None
    try:
        step = width
        for k in range(0, len(todo), step):
            batch = todo[k:k + step]
            results = list(pool.map(cell_fn, batch)) if pool else [cell_fn(m) for m in batch]
            for m, r in zip(batch, results):
                cells.extend(r)
                done.add(m.market_id)
            reason = monitor.advance(len(batch))
            if reason and len(done) < len(markets):
                path = _partial_path(args)
                state = {"command": command, "reason": reason, "completed_markets": sorted(done),
                         "cells": cells, "provenance": prov}
                path.write_text(dumps(state))
                raise Stopped(reason, path)
    finally:
        if pool:
            pool.shutdown()
    return cells


# ---------------------------------------------------------------- commands


def _write(args, command: str, report, prov: dict) -> None:
    doc = {"command": command, "report": report, "provenance": prov}
    text = dumps(doc)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_synth(args, cfg) -> int:
    if not args.out:
        raise UsageError("synth needs --out")
    seed = args.seed if args.seed is not None else 0
    if args.kind == "mixed":
        specs = synth.batch_specs(args.n_markets, seed)
    else:
        specs = synth.batch_specs(args.n_markets, seed, path_kind=args.kind)
    markets = synth.generate_batch(specs)
    out = Path(args.out)
    tmp = out.parent / (out.stem + ".parts")
    paths = synth.write_batch(markets, tmp)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths["events"].replace(out)
    written = [str(out)]
    for kind in ("resolutions", "metadata", "news"):
        target = out.with_name(f"{out.stem}.{kind}.jsonl")
        paths[kind].replace(target)
        written.append(str(target))
    tmp.rmdir()
    prov = provenance_block(written, {"synth": seed}, [synth.spec_to_dict(s) for s in specs], "synth")
    manifest = out.with_name(f"{out.stem}.synth.json")
    manifest.write_text(dumps({"command": "synth", "report": {"markets": len(specs),
                                                              "events": sum(len(m.events) for m in markets),
                                                              "files": written}, "provenance": prov}) + "\n")
    return EXIT_OK


def cmd_ingest(args, cfg) -> int:
    markets, used = _inputs(args)
    per = {}
    for m in markets:
        ok, total = reconstruction_agreement(m.events)
        per[m.market_id] = {"cleaning": dataclasses.asdict(m.cleaning), "book_agreement": [ok, total],
                            "class": m.event_class, "resolved": m.resolved}
    agree = sum(v["book_agreement"][0] for v in per.values())
    total = sum(v["book_agreement"][1] for v in per.values())
    report = {"markets": per, "book_agreement_rate": agree / total if total else None}
    _write(args, "ingest", report, provenance_block(used, {}, None, "ingest"))
    return EXIT_OK


def cmd_sf(args, cfg) -> int:
    markets, used = _inputs(args)
    params = params_from_config(cfg)
    report = stylized.stylized_facts(markets, params.path_settings).to_dict()
    _write(args, "sf", report, provenance_block(used, {}, params, "sf"))
    return EXIT_OK


def _cell_command(args, cfg, command: str) -> int:
    markets, used = _inputs(args)
    params = params_from_config(cfg)
    hazard = _hazard(args)
    grid = replay.GridSpec(**{k: tuple(v) for k, v in cfg.get("grid", {}).items()})
    prov = provenance_block(used, {}, {"engine": params, "grid": grid}, command)
    if command == "e2a":
        fn = functools.partial(replay.e2a_cells, params=params, hazard=hazard)
        cells = _run_cells(args, command, markets, fn, prov)
        report = replay.aggregate_e2a(cells)
    elif command == "e2b":
        resolved = [m for m in markets if m.resolved]
        if not resolved:
            raise NoResolvedMarkets("no resolved markets in input")
        fn = functools.partial(replay.e2b_cells, grid=grid, params=params, hazard=hazard)
        cells = _run_cells(args, command, resolved, fn, prov)
        report = replay.aggregate_e2b(cells, params.liquidation.phi_fund)
    else:
        resolved = [m for m in markets if m.resolved]
        if not resolved:
            raise NoResolvedMarkets("no resolved markets in input")
        fn = functools.partial(replay.e3_cells, params=params, hazard=hazard)
        cells = _run_cells(args, command, resolved, fn, prov)
        report = replay.aggregate_e3(cells)
    _write(args, command, report, prov)
    return EXIT_OK


def cmd_e2c(args, cfg) -> int:
    if args.seed is None:
        raise UsageError("e2c needs --seed")
    markets, used = _inputs(args)
    params = params_from_config(cfg)
    pop_cfg = dict(cfg.get("traders", {}))
    pop_cfg["seed"] = args.seed
    if args.traders is not None:
        pop_cfg["n_traders"] = args.traders
    try:
        pop = replay.TraderPopSpec(**pop_cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"traders: {exc}") from exc
    report = replay.run_e2c(markets, pop=pop, params=params, hazard=_hazard(args))
    _write(args, "e2c", report, provenance_block(used, {"e2c": args.seed}, {"engine": params, "traders": pop}, "e2c"))
    return EXIT_OK


def cmd_floors(args, cfg) -> int:
    reports = {}
    for name in ("e2a", "e2b", "e3"):
        path = getattr(args, name)
        try:
            with open(path) as fh:
                reports[name] = json.load(fh)["report"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise PreflightError(f"cannot read {name} report {path}: {exc}") from exc
    metrics = replay.floor_metrics(reports["e2a"], reports["e2b"], reports["e3"])
    report = replay.evaluate_floors(metrics).to_dict()
    _write(args, "floors", report, provenance_block([args.e2a, args.e2b, args.e3], {}, None, "floors"))
    return EXIT_OK


def cmd_gate(args, cfg) -> int:
    counts = dict(cfg.get("counts", {}))
    for name in ("politics", "sports", "crypto", "other", "failure_sample"):
        v = getattr(args, name)
        if v is not None:
            counts[name] = v
    try:
        gc = eligibility.GateCounts(**counts)
        floors = eligibility.GateFloors(crypto=args.crypto_floor)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    result = eligibility.adequacy_gate(gc, floors)
    report = {"counts": dataclasses.asdict(gc), "floors": dataclasses.asdict(floors), **result.to_dict()}
    _write(args, "gate", report, provenance_block([], {}, None, "gate"))
    return EXIT_OK


def cmd_eligibility(args, cfg) -> int:
    if not args.features:
        raise UsageError("eligibility needs --features")
    try:
        with open(args.features) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise PreflightError(f"cannot read features: {exc}") from exc
    markets = doc.get("markets", {})
    weights = doc.get("weights")
    threshold = doc.get("threshold", eligibility.LISTING_THRESHOLD)
    raw = {mid: rec["features"] for mid, rec in markets.items()}
    classes = {mid: rec.get("class", "other") for mid, rec in markets.items()}
    mapped = eligibility.class_percentiles(raw, classes)
    out = {}
    for mid in sorted(markets):
        rec = markets[mid]
        flags_doc = dict(rec.get("flags", {}))
        cats = frozenset(flags_doc.pop("categories", []))
        flags = eligibility.OverlayFlags(**{k: eligibility.Grade(v) for k, v in flags_doc.items()}, categories=cats)
        score = eligibility.suitability_score(mapped[mid], weights)
        decision = eligibility.listing_decision(score, flags, threshold)
        out[mid] = {"score": score, "mapped": mapped[mid], "flags": flags.to_dict(),
                    "eligible": decision.eligible, "reason": decision.reason}
    report = {"markets": out}
    if args.per_day is not None:
        days = {mid: rec["first_seen_day"] for mid, rec in markets.items() if "first_seen_day" in rec}
        seed = args.seed if args.seed is not None else eligibility.DEFAULT_SEED
        report["sample"] = eligibility.stratified_sample(days, args.per_day, seed)
    _write(args, "eligibility", report, provenance_block([args.features], {"sample": args.seed or 0}, None, "eligibility"))
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    if not args.axis or not args.values:
        raise UsageError("sweep needs --axis and --values")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from exc
    if args.axis not in replay.AXES:
        raise UsageError(f"unknown axis {args.axis!r}")
    if not values:
        raise UsageError("empty sweep grid")
    for v in values:
        try:
            replay.AXES[args.axis].check(v)
        except OutOfRange as exc:
            raise UsageError(str(exc)) from exc
    markets, used = _inputs(args)
    params = params_from_config(cfg)
    reports = replay.sensitivity_sweep(markets, args.axis, values, params, hazard=_hazard(args))
    _write(args, "sweep", reports, provenance_block(used, {}, params, "sweep"))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "sf": cmd_sf,
    "e2a": lambda a, c: _cell_command(a, c, "e2a"),
    "e2b": lambda a, c: _cell_command(a, c, "e2b"),
    "e2c": cmd_e2c,
    "e3": lambda a, c: _cell_command(a, c, "e3"),
    "floors": cmd_floors,
    "gate": cmd_gate,
    "eligibility": cmd_eligibility,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--stage")
    common.add_argument("--stop-file")
    common.add_argument("--max-rss-gb", type=float)
    common.add_argument("--max-wall-min", type=float)
    common.add_argument("--parallelism", type=int, default=1)
    common.add_argument("--check-every", type=int, default=100)
    common.add_argument("--resume")
    data = _Parser(add_help=False)
    data.add_argument("--events", action="append")
    data.add_argument("--resolutions")
    data.add_argument("--metadata")
    data.add_argument("--news")
    data.add_argument("--hazard")
    data.add_argument("--hazard-constant", type=float)

    parser = _Parser(prog="elprisk", description="Event-linked perpetual risk engine replay.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common])
    p.add_argument("--n-markets", type=int, default=1)
    p.add_argument("--kind", choices=synth.PATH_KINDS + ("mixed",), default="mixed")
    for name in ("ingest", "sf", "e2a", "e2b", "e3"):
        sub.add_parser(name, parents=[common, data])
    p = sub.add_parser("e2c", parents=[common, data])
    p.add_argument("--traders", type=int)
    p = sub.add_parser("floors", parents=[common])
    for name in ("e2a", "e2b", "e3"):
        p.add_argument(f"--{name}", required=True)
    p = sub.add_parser("gate", parents=[common])
    for name in ("politics", "sports", "crypto", "other", "failure_sample"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    p.add_argument("--crypto-floor", type=int, default=50)
    p = sub.add_parser("eligibility", parents=[common])
    p.add_argument("--features")
    p.add_argument("--per-day", type=int)
    p = sub.add_parser("sweep", parents=[common, data])
    p.add_argument("--axis")
    p.add_argument("--values")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.parallelism < 1 or args.check_every < 1:
            parser.error("--parallelism and --check-every must be >= 1")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"elprisk: {exc}\n")
        return EXIT_USAGE
    except (UnknownAxis, OutOfRange) as exc:
        sys.stderr.write(f"elprisk: {exc}\n")
        return EXIT_USAGE
    except Stopped as exc:
        sys.stderr.write(f"elprisk: stopped ({exc.reason}); partial state in {exc.partial_path}\n")
        return EXIT_STOPPED
    except (PreflightError, ElpriskError, OSError) as exc:
        sys.stderr.write(f"elprisk: {exc}\n")
        return EXIT_PREFLIGHT


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
