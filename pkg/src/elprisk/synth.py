"""Deterministic synthetic prediction-market event streams.

Each market has a fair-price path on a fixed tick grid, a symmetric quote
ladder whose half-spread depends on the price region, depth asymmetry in the
boundary regions, trades at the fair price and a terminal collapse to the
outcome at the resolution instant.  The same spec and seed always produce the
same stream.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidSpec
from .estimators import NewsWindow, ResolutionRecord
from .ingest import BOOK, PRICE_CHANGE, TRADE, MS_PER_HOUR, BookPayload, PriceChangePayload, RawEvent, TradePayload, dumps_event
from .marketpath import MarketData

TICKS = 4000
DEFAULT_START_TS = 1_776_729_600_000
REGION_EDGES = (0.1, 0.3, 0.7, 0.9)
DEFAULT_HALF_SPREADS = (0.0055, 0.0725, 0.27, 0.07, 0.00525)
PATH_KINDS = ("flat", "piecewise", "mean_reverting", "dip_recover")


def price_region(price: float, edges: Sequence[float] = REGION_EDGES) -> int:
    """Region index for [0, e1], (e1, e2], ... , (e4, 1]."""
    for k, e in enumerate(edges):
        if price <= e:
            return k
    return len(edges)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    market_id: str = "synth-0"
    event_class: str = "politics"
    lifetime_hours: float = 48.0
    start_ts: int = DEFAULT_START_TS
    path_kind: str = "flat"
    base_price: float = 0.5
    waypoints: tuple[tuple[float, float], ...] = ()
    mr_speed: float = 0.5
    mr_vol: float = 0.02
    dip_start_hours: float = 12.0
    dip_depth: float = 0.05
    dip_hours: float = 2.0
    pre_collapse: float | None = None
    settle_hours: float = 6.0
    outcome: int | None = 1
    disputed: bool = False
    half_spreads: tuple[float, float, float, float, float] = DEFAULT_HALF_SPREADS
    rho_target: float = 1.7
    level_step: float = 0.005
    levels: int = 8
    level_size: float = 100.0
    events_per_hour: float = 60.0
    trade_share: float = 0.25
    snapshot_every: int = 50
    trade_size_median: float = 20.0
    trade_size_sigma: float = 1.0
    price_floor: float = 0.01
    news: tuple[tuple[float, float], ...] = ()

    def validate(self) -> None:
        if self.rho_target <= 0:
            raise InvalidSpec("rho_target must be positive")
        if self.lifetime_hours <= 0 or self.events_per_hour <= 0:
            raise InvalidSpec("lifetime and event rate must be positive")
        if self.path_kind not in PATH_KINDS:
            raise InvalidSpec(f"unknown path kind {self.path_kind!r}")
        if self.outcome not in (None, 0, 1):
            raise InvalidSpec("outcome must be 0, 1 or None")
        if len(self.half_spreads) != 5 or any(not 0 < h < 0.5 for h in self.half_spreads):
            raise InvalidSpec("need five half-spreads in (0, 0.5)")
        if not 0 < self.price_floor < 0.5:
            raise InvalidSpec("price_floor must lie in (0, 0.5)")
        prices = [self.base_price] + [p for _, p in self.waypoints]
        if self.pre_collapse is not None:
            prices.append(self.pre_collapse)
        if any(not 0.0 <= p <= 1.0 for p in prices):
            raise InvalidSpec("prices must lie in [0, 1]")
        if not 0.0 <= self.trade_share < 1.0 or self.snapshot_every < 1 or self.levels < 1:
            raise InvalidSpec("invalid event mix")
        for lo, hi in self.news:
            if not lo < hi:
                raise InvalidSpec("news window needs start < end")

    @property
    def tau(self) -> int:
        return self.start_ts + int(round(self.lifetime_hours * MS_PER_HOUR))


@dataclass
class SynthMarket:
    spec: SynthSpec
    events: list[RawEvent]
    resolution: ResolutionRecord | None
    news: tuple[NewsWindow, ...] = field(default_factory=tuple)

    def to_market(self) -> MarketData:
        return MarketData.from_raw(
            self.events, self.resolution, self.spec.event_class, self.news, scheduled_end_ts=self.spec.tau
        )


class _FairPath:
    """Fair price as a function of hours since listing."""

    def __init__(self, spec: SynthSpec, rng: random.Random):
        self.spec = spec
        self.grid: list[float] | None = None
        if spec.path_kind == "mean_reverting":
            steps = int(math.ceil(spec.lifetime_hours * 60)) + 1
            dt = 1.0 / 60.0
            p = spec.base_price
            grid = []
            for _ in range(steps):
                grid.append(p)
                p += spec.mr_speed * (spec.base_price - p) * dt + spec.mr_vol * math.sqrt(dt) * rng.gauss(0.0, 1.0)
                p = min(max(p, 0.0), 1.0)
            self.grid = grid

    def __call__(self, hours: float) -> float:
        s = self.spec
        if s.pre_collapse is not None and hours >= s.lifetime_hours - s.settle_hours:
            return s.pre_collapse
        if s.path_kind == "flat":
            return s.base_price
        if s.path_kind == "piecewise":
            pts = [(0.0, s.base_price)] + sorted(s.waypoints)
            if hours >= pts[-1][0]:
                return pts[-1][1]
            for (h0, p0), (h1, p1) in zip(pts, pts[1:]):
                if h0 <= hours < h1:
                    return p0 + (p1 - p0) * (hours - h0) / (h1 - h0)
            return pts[-1][1]
        if s.path_kind == "dip_recover":
            d = hours - s.dip_start_hours
            half = s.dip_hours / 2.0
            if 0.0 <= d < s.dip_hours:
                frac = d / half if d < half else (s.dip_hours - d) / half
                return s.base_price - s.dip_depth * frac
            return s.base_price
        return self.grid[min(int(hours * 60), len(self.grid) - 1)]


class _Ladder:
    def __init__(self, spec: SynthSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.base = [spec.level_size * rng.uniform(0.5, 1.5) for _ in range(spec.levels)]
        self.mid_tick: int | None = None
        self.bids: dict[int, float] = {}
        self.asks: dict[int, float] = {}

    def _multipliers(self, mid: float) -> tuple[float, float]:
        region = price_region(mid)
        rho = self.spec.rho_target
        if region == 0:
            return rho, 1.0
        if region == len(REGION_EDGES):
            return 1.0, rho
        return 1.0, 1.0

    def _layout(self, mid_tick: int) -> tuple[dict[int, float], dict[int, float]]:
        s = self.spec
        mid = mid_tick / TICKS
        hs = int(round(s.half_spreads[price_region(mid)] * TICKS))
        step = int(round(s.level_step * TICKS))
        mb, ma = self._multipliers(mid)
        bids, asks = {}, {}
        for j, b in enumerate(self.base):
            bt, at = mid_tick - hs - j * step, mid_tick + hs + j * step
            if bt >= 1:
                bids[bt] = round(b * mb, 4)
            if at <= TICKS - 1:
                asks[at] = round(b * ma, 4)
        return bids, asks

    def move(self, mid_tick: int) -> list[tuple[str, float, float]]:
        """Rewrite the ladder around ``mid_tick`` and return the level changes."""
        bids, asks = self._layout(mid_tick)
        changes = self._diff("bid", self.bids, bids) + self._diff("ask", self.asks, asks)
        self.bids, self.asks, self.mid_tick = bids, asks, mid_tick
        return changes

    def refresh(self) -> list[tuple[str, float, float]]:
        """Resize one level on both sides together, keeping the side ratio."""
        j = self.rng.randrange(len(self.base))
        self.base[j] = self.spec.level_size * self.rng.uniform(0.5, 1.5)
        return self.move(self.mid_tick)

    @staticmethod
    def _diff(side: str, old: dict[int, float], new: dict[int, float]) -> list[tuple[str, float, float]]:
        out = []
        for t in sorted(set(old) | set(new)):
            if t not in new:
                out.append((side, t / TICKS, 0.0))
            elif old.get(t) != new[t]:
                out.append((side, t / TICKS, new[t]))
        return out

    def best(self) -> tuple[float | None, float | None]:
        bb = max(self.bids) / TICKS if self.bids else None
        ba = min(self.asks) / TICKS if self.asks else None
        return bb, ba

    def snapshot(self) -> BookPayload:
        bids = tuple((t / TICKS, self.bids[t]) for t in sorted(self.bids, reverse=True))
        asks = tuple((t / TICKS, self.asks[t]) for t in sorted(self.asks))
        return BookPayload(bids, asks)


def _mid_tick(price: float, spec: SynthSpec) -> int:
    lo = int(round(spec.price_floor * TICKS))
    return min(max(int(round(price * TICKS)), lo), TICKS - lo)


def generate(spec: SynthSpec) -> SynthMarket:
    """Event stream and resolution record for one synthetic market."""
    spec.validate()
    rng = random.Random(spec.seed)
    fair = _FairPath(spec, rng)
    ladder = _Ladder(spec, rng)
    tau = spec.tau
    events: list[RawEvent] = []
    seq = 0

    def emit(ts: int, kind: str, payload) -> None:
        nonlocal seq
        seq += 1
        events.append(RawEvent(ts, ts, kind, spec.market_id, spec.market_id + "-yes", seq, payload))

    t = spec.start_ts
    ladder.move(_mid_tick(fair(0.0), spec))
    emit(t, BOOK, ladder.snapshot())
    deltas = 0
    mean_gap = MS_PER_HOUR / spec.events_per_hour
    mu = math.log(spec.trade_size_median)
    while True:
        t += max(1, int(rng.expovariate(1.0 / mean_gap)))
        if t >= tau:
            break
        if deltas >= spec.snapshot_every:
            emit(t, BOOK, ladder.snapshot())
            deltas = 0
            continue
        k = _mid_tick(fair((t - spec.start_ts) / MS_PER_HOUR), spec)
        if k != ladder.mid_tick:
            changes = ladder.move(k)
        elif rng.random() < spec.trade_share:
            size = round(max(1.0, rng.lognormvariate(mu, spec.trade_size_sigma)), 2)
            side = "buy" if rng.random() < 0.5 else "sell"
            emit(t, TRADE, TradePayload(k / TICKS, size, side, 0.0, f"0x{spec.seed:x}{seq:08x}"))
            continue
        else:
            changes = ladder.refresh()
        if not changes:
            continue
        bb, ba = ladder.best()
        emit(t, PRICE_CHANGE, PriceChangePayload(tuple(changes), bb, ba))
        deltas += 1
    resolution = None
    if spec.outcome is not None:
        resolution = ResolutionRecord(spec.market_id, spec.outcome, tau, spec.disputed, "synthetic")
    news = tuple(
        NewsWindow(spec.event_class, spec.start_ts + int(lo * MS_PER_HOUR), spec.start_ts + int(hi * MS_PER_HOUR), "synthetic")
        for lo, hi in spec.news
    )
    return SynthMarket(spec, events, resolution, news)


def batch_specs(n: int, seed: int, **overrides) -> list[SynthSpec]:
    """``n`` varied specs: path kinds cycle, levels and outcomes are drawn from ``seed``."""
    if n < 0:
        raise InvalidSpec("n must be non-negative")
    rng = random.Random(seed)
    classes = ("politics", "sports", "crypto", "other")
    out = []
    for i in range(n):
        kind = PATH_KINDS[i % len(PATH_KINDS)]
        base = round(rng.uniform(0.15, 0.85), 4)
        fields = dict(
            seed=rng.randrange(2**31),
            market_id=f"synth-{seed}-{i:04d}",
            event_class=classes[i % len(classes)],
            path_kind=kind,
            base_price=base,
            outcome=rng.randrange(2),
            pre_collapse=round(rng.uniform(0.15, 0.85), 4),
        )
        if kind == "piecewise":
            fields["waypoints"] = tuple(
                (h, round(rng.uniform(0.15, 0.85), 4)) for h in (8.0, 16.0, 24.0, 32.0)
            )
        fields.update(overrides)
        out.append(SynthSpec(**fields))
    return out


def generate_batch(specs: Iterable[SynthSpec]) -> list[SynthMarket]:
    return [generate(s) for s in specs]


def spec_to_dict(spec: SynthSpec) -> dict:
    return asdict(spec)


def spec_from_dict(d: dict) -> SynthSpec:
    d = dict(d)
    for key in ("waypoints", "news"):
        if key in d:
            d[key] = tuple(tuple(x) for x in d[key])
    if "half_spreads" in d:
        d["half_spreads"] = tuple(d["half_spreads"])
    return SynthSpec(**d)


def write_batch(markets: Sequence[SynthMarket], out_dir: str | Path) -> dict[str, Path]:
    """Write events, resolutions, metadata and news as JSONL files under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f"{k}.jsonl" for k in ("events", "resolutions", "metadata", "news")}
    with paths["events"].open("w") as fh:
        for m in markets:
            for ev in m.events:
                fh.write(dumps_event(ev) + "\n")
    with paths["resolutions"].open("w") as fh:
        for m in markets:
            r = m.resolution
            rec = {"market": m.spec.market_id, "outcome": None, "resolution_ts": None}
            if r is not None:
                rec = {"market": r.market_id, "outcome": r.outcome, "resolution_ts": r.resolution_ts,
                       "disputed": r.disputed, "oracle_source": r.oracle_source}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with paths["metadata"].open("w") as fh:
        for m in markets:
            fh.write(json.dumps({"market": m.spec.market_id, "class": m.spec.event_class,
                                 "scheduled_end_ts": m.spec.tau}, sort_keys=True) + "\n")
    with paths["news"].open("w") as fh:
        seen = set()
        for m in markets:
            for w in m.news:
                key = (w.market_class, w.start_ts, w.end_ts)
                if key not in seen:
                    seen.add(key)
                    fh.write(json.dumps({"class": w.market_class, "start_ts": w.start_ts,
                                         "end_ts": w.end_ts, "label": w.label}, sort_keys=True) + "\n")
    return paths


def with_spec(spec: SynthSpec, **changes) -> SynthSpec:
    return replace(spec, **changes)
