"""Per-market observation series shared by the engines and the stylized facts.

A market is replayed once: after every distinct receive timestamp the book,
depth, index components, reference price and rolling volatility are recorded.
Simulations then read these series instead of rebuilding books per position.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .estimators import (
    I_FLOOR,
    NewsWindow,
    ResolutionRecord,
    ema_recursion,
    news_active,
    path_increment,
)
from .index import IndexComponents, IndexParams, composite_index, depth_protected_mid
from .ingest import (
    MS_PER_HOUR,
    PRICE_CHANGE,
    TRADE,
    BookReplayer,
    CleanEvent,
    CleaningStats,
    OrderBookState,
    RawEvent,
    book_at,
    clean_stream,
    depth_within,
    group_by_market,
    iter_jsonl,
    load_events,
)


@dataclass(frozen=True)
class PathSettings:
    index: IndexParams = IndexParams()
    vol_window_hours: float = 1.0
    vol_floor: float = I_FLOOR
    news_horizon_hours: float = 1.0


@dataclass
class MarketData:
    market_id: str
    events: list[CleanEvent]
    event_class: str = "other"
    resolution: ResolutionRecord | None = None
    news: tuple[NewsWindow, ...] = ()
    scheduled_end_ts: int | None = None
    cleaning: CleaningStats | None = None
    _paths: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_raw(
        cls,
        raw: Sequence[RawEvent],
        resolution: ResolutionRecord | None = None,
        event_class: str = "other",
        news: Sequence[NewsWindow] = (),
        scheduled_end_ts: int | None = None,
    ) -> "MarketData":
        events, stats = clean_stream(raw)
        market_id = events[0].market_id if events else (resolution.market_id if resolution else "")
        own_news = tuple(w for w in news if w.market_class == event_class)
        return cls(market_id, events, event_class, resolution, own_news, scheduled_end_ts, stats)

    @property
    def resolved(self) -> bool:
        return self.resolution is not None and self.resolution.resolved

    @property
    def outcome(self) -> int | None:
        return self.resolution.outcome if self.resolved else None

    @property
    def tau(self) -> int:
        """Resolution instant, else the scheduled end, else just after the last event."""
        if self.resolved:
            return self.resolution.resolution_ts
        if self.scheduled_end_ts is not None:
            return self.scheduled_end_ts
        return (self.events[-1].timestamp_received + 1) if self.events else 0

    def path(self, settings: PathSettings = PathSettings()) -> "MarketPath":
        cached = self._paths.get(settings)
        if cached is None:
            cached = build_path(self, settings)
            self._paths[settings] = cached
        return cached


@dataclass
class MarketPath:
    market: MarketData
    settings: PathSettings
    ts: list[int] = field(default_factory=list)
    mid: list[float | None] = field(default_factory=list)
    best_bid: list[float | None] = field(default_factory=list)
    best_ask: list[float | None] = field(default_factory=list)
    ref: list[float | None] = field(default_factory=list)
    idx: list[float | None] = field(default_factory=list)
    confidence: list[float] = field(default_factory=list)
    depth: list[float] = field(default_factory=list)
    bid_depth: list[float] = field(default_factory=list)
    ask_depth: list[float] = field(default_factory=list)
    sigma_ref: list[float] = field(default_factory=list)
    sigma_idx: list[float] = field(default_factory=list)
    news: list[bool] = field(default_factory=list)
    has_price_change: list[bool] = field(default_factory=list)
    trades: list[tuple[int, float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ts)

    def count_before(self, t: float) -> int:
        return bisect_left(self.ts, t)

    def book(self, i: int) -> OrderBookState:
        return book_at(self.market.events, self.ts[i])

    def series(self, source: str) -> tuple[list[float | None], list[float]]:
        if source == "reference_direct":
            return self.ref, self.sigma_ref
        return self.idx, self.sigma_idx

    def entry_index(self, entry_ts: int | None = None, before: float | None = None) -> int | None:
        """First observation at or after ``entry_ts`` with a valid composite index."""
        start = 0 if entry_ts is None else bisect_left(self.ts, entry_ts)
        end = len(self.ts) if before is None else self.count_before(before)
        for i in range(start, end):
            if self.idx[i] is not None and self.ref[i] is not None:
                return i
        return None


class _RollingVol:
    """Root mean squared non-zero increment over a trailing time window."""

    def __init__(self, window_hours: float, floor: float):
        self.window_ms = window_hours * MS_PER_HOUR
        self.floor = floor
        self.last: float | None = None
        self.sq: deque[tuple[int, float]] = deque()

    def sigma(self, t: int) -> float:
        lo = t - self.window_ms
        sq = self.sq
        while sq and sq[0][0] < lo:
            sq.popleft()
        if not sq:
            return 0.0
        total = 0.0
        for _, v in sq:
            total += v
        return math.sqrt(total / len(sq))

    def update(self, t: int, value: float | None) -> None:
        if value is None:
            return
        if self.last is not None:
            inc, _ = path_increment(self.last, value, self.floor)
            if inc != 0.0:
                self.sq.append((t, inc * inc))
        self.last = value


def build_path(market: MarketData, settings: PathSettings = PathSettings()) -> MarketPath:
    ip = settings.index
    out = MarketPath(market, settings)
    rep = BookReplayer()
    window: deque[tuple[float, float]] = deque(maxlen=ip.vwap_events)
    vwap: float | None = None
    last_trade: float | None = None
    ref_prev: float | None = None
    vol_ref = _RollingVol(settings.vol_window_hours, settings.vol_floor)
    vol_idx = _RollingVol(settings.vol_window_hours, settings.vol_floor)
    events = market.events
    news = market.news
    n = len(events)
    k = 0
    while k < n:
        t = events[k].timestamp_received
        saw_change = False
        traded = False
        while k < n and events[k].timestamp_received == t:
            ev = events[k]
            rep.apply(ev)
            if ev.event_type == TRADE:
                p = ev.payload
                out.trades.append((t, p.price, p.size))
                last_trade = p.price
                if p.size > 0:
                    window.append((p.price, p.size))
                    traded = True
            elif ev.event_type == PRICE_CHANGE:
                saw_change = True
            k += 1
        if not rep.has_snapshot:
            continue
        if traded:
            vwap = ema_recursion(window, ip.vwap_alpha)
        book = rep.book
        mid = book.mid()
        prof = depth_within(book, mid, ip.window_bps)
        d = prof.total
        comps = IndexComponents(mid, depth_protected_mid(book, ip.window_bps), vwap, (d, d, d))
        iv = composite_index(comps, prof, ip) if comps.present() else None
        ref = mid if mid is not None else (ref_prev if ref_prev is not None else last_trade)
        ref_prev = ref
        out.ts.append(t)
        out.mid.append(mid)
        out.best_bid.append(book.best_bid())
        out.best_ask.append(book.best_ask())
        out.ref.append(ref)
        out.idx.append(iv.value if iv else None)
        out.confidence.append(iv.confidence if iv else 0.0)
        out.depth.append(d)
        out.bid_depth.append(prof.bid_depth_within)
        out.ask_depth.append(prof.ask_depth_within)
        out.sigma_ref.append(vol_ref.sigma(t))
        out.sigma_idx.append(vol_idx.sigma(t))
        vol_ref.update(t, ref)
        vol_idx.update(t, iv.value if iv else None)
        out.news.append(news_active(news, t, settings.news_horizon_hours) if news else False)
        out.has_price_change.append(saw_change)
    return out


def load_markets(
    event_paths: Sequence[str],
    resolutions: dict[str, ResolutionRecord] | None = None,
    metadata: dict[str, dict] | None = None,
    news: Sequence[NewsWindow] = (),
    strict: bool = False,
) -> tuple[list[MarketData], dict]:
    """Group events by market and attach resolution, class, schedule and news.

    Returns the markets sorted by id and the loader's rejection counts.
    """
    raw, stats = load_events(list(event_paths), strict=strict)
    resolutions = resolutions or {}
    metadata = metadata or {}
    markets = []
    for mid, evs in group_by_market(raw).items():
        meta = metadata.get(mid, {})
        end = meta.get("scheduled_end_ts")
        markets.append(MarketData.from_raw(
            evs, resolutions.get(mid), str(meta.get("class", "other")), news,
            None if end is None else int(end),
        ))
    return markets, {"lines": stats.lines, "rejected": stats.rejected}


def load_metadata(path: str) -> dict[str, dict]:
    out = {}
    for line in iter_jsonl(path):
        rec = json.loads(line)
        out[str(rec["market"])] = rec
    return out
