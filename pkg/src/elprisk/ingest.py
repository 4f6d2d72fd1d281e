"""Canonical tick-event parsing, stream cleaning and order-book reconstruction.

Events arrive as one JSON object per line with the fields ``timestamp_received``,
``timestamp``, ``event_type``, ``market``, ``asset_id``, ``seq`` and a
type-specific ``payload``.  All clocks are integer milliseconds UTC and the
receive timestamp is the ordering clock throughout the package.

``price_change`` payloads are absolute overwrites of individual levels
(``size == 0`` deletes the level), so a book is always the latest snapshot
plus the overwrites that followed it.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import (
    MalformedRecord,
    NoSnapshotBefore,
    OutOfRangePrice,
    StaleEvent,
    UnknownEventType,
)

EVENT_TYPES = ("book", "price_change", "last_trade_price", "tick_size_change")
BOOK = "book"
PRICE_CHANGE = "price_change"
TRADE = "last_trade_price"
TICK = "tick_size_change"

MS_PER_HOUR = 3_600_000
# absorbs float noise when a level sits exactly on a window edge
_EDGE_EPS = 1e-9


# ---------------------------------------------------------------- payloads


@dataclass(frozen=True, slots=True)
class BookPayload:
    bids: tuple[tuple[float, float], ...]
    asks: tuple[tuple[float, float], ...]

    @property
    def empty(self) -> bool:
        return not self.bids and not self.asks


@dataclass(frozen=True, slots=True)
class PriceChangePayload:
    # (side, price, new_size) with side in {"bid", "ask"}
    changes: tuple[tuple[str, float, float], ...]
    best_bid: float | None
    best_ask: float | None


@dataclass(frozen=True, slots=True)
class TradePayload:
    price: float
    size: float
    side: str
    fee: float = 0.0
    tx_hash: str = ""


@dataclass(frozen=True, slots=True)
class TickSizePayload:
    tick_size: float


Payload = BookPayload | PriceChangePayload | TradePayload | TickSizePayload


@dataclass(frozen=True, slots=True)
class RawEvent:
    timestamp_received: int
    timestamp: int
    event_type: str
    market_id: str
    asset_id: str
    seq: int
    payload: Payload


@dataclass(frozen=True, slots=True)
class CleanEvent:
    timestamp_received: int
    timestamp: int
    event_type: str
    market_id: str
    asset_id: str
    seq: int
    payload: Payload
    monotone_index: int
    dormant: bool = False

    @property
    def ts(self) -> int:
        return self.timestamp_received


# ---------------------------------------------------------------- parsing


def _num(value, what: str) -> float:
    if isinstance(value, bool) or value is None:
        raise MalformedRecord(f"{what}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"{what}: {value!r} is not numeric") from exc


def _price(value, what: str) -> float:
    p = _num(value, what)
    # non-finite values pass through here and are dropped by clean_stream
    if math.isfinite(p) and not 0.0 <= p <= 1.0:
        raise OutOfRangePrice(f"{what}: {p} outside [0, 1]")
    return p


def _int(value, what: str) -> int:
    if isinstance(value, bool):
        raise MalformedRecord(f"{what}: expected an integer")
    try:
        out = int(value)
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"{what}: {value!r} is not an integer") from exc
    if isinstance(value, float) and value != out:
        raise MalformedRecord(f"{what}: {value!r} is not an integer")
    return out


def _side(value) -> str:
    s = str(value).strip().lower()
    if s in ("bid", "buy", "bids"):
        return "bid"
    if s in ("ask", "sell", "asks"):
        return "ask"
    raise MalformedRecord(f"unknown side {value!r}")


def _levels(raw, what: str) -> tuple[tuple[float, float], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise MalformedRecord(f"{what}: expected a list of levels")
    out = []
    for lvl in raw:
        if isinstance(lvl, dict):
            p, s = lvl.get("price"), lvl.get("size")
        elif isinstance(lvl, (list, tuple)) and len(lvl) == 2:
            p, s = lvl
        else:
            raise MalformedRecord(f"{what}: bad level {lvl!r}")
        out.append((_price(p, what), _num(s, what)))
    return tuple(out)


def _payload(event_type: str, raw) -> Payload:
    if not isinstance(raw, dict):
        raise MalformedRecord("payload must be an object")
    if event_type == BOOK:
        return BookPayload(_levels(raw.get("bids"), "bids"), _levels(raw.get("asks"), "asks"))
    if event_type == PRICE_CHANGE:
        changes_raw = raw.get("changes", raw.get("price_changes"))
        if not isinstance(changes_raw, list):
            raise MalformedRecord("price_change without a changes list")
        changes = []
        for ch in changes_raw:
            if not isinstance(ch, dict):
                raise MalformedRecord("price_change entries must be objects")
            changes.append((_side(ch.get("side")), _price(ch.get("price"), "change"), _num(ch.get("size"), "change")))
        bb, ba = raw.get("best_bid"), raw.get("best_ask")
        return PriceChangePayload(
            tuple(changes),
            None if bb is None else _price(bb, "best_bid"),
            None if ba is None else _price(ba, "best_ask"),
        )
    if event_type == TRADE:
        return TradePayload(
            price=_price(raw.get("price"), "trade price"),
            size=_num(raw.get("size"), "trade size"),
            side=str(raw.get("side", "")),
            fee=_num(raw.get("fee", raw.get("fee_rate_bps", 0.0)), "fee"),
            tx_hash=str(raw.get("tx_hash", raw.get("transaction_hash", ""))),
        )
    tick = raw.get("tick_size", raw.get("new_tick_size"))
    return TickSizePayload(_num(tick, "tick_size"))


def parse_record(rec: dict) -> RawEvent:
    """Type a decoded JSON object; unknown extra fields are ignored."""
    if not isinstance(rec, dict):
        raise MalformedRecord("record must be a JSON object")
    event_type = rec.get("event_type")
    if event_type not in EVENT_TYPES:
        raise UnknownEventType(f"unknown event_type {event_type!r}")
    try:
        market = rec["market"] if "market" in rec else rec["market_id"]
        ts_recv = _int(rec["timestamp_received"], "timestamp_received")
        ts = _int(rec.get("timestamp", ts_recv), "timestamp")
        seq = _int(rec.get("seq", 0), "seq")
    except KeyError as exc:
        raise MalformedRecord(f"missing field {exc.args[0]}") from exc
    return RawEvent(
        timestamp_received=ts_recv,
        timestamp=ts,
        event_type=event_type,
        market_id=str(market),
        asset_id=str(rec.get("asset_id", "")),
        seq=seq,
        payload=_payload(event_type, rec.get("payload")),
    )


def parse_event(line: str) -> RawEvent:
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedRecord(f"unparseable record: {exc}") from exc
    return parse_record(rec)


def event_to_record(ev: RawEvent | CleanEvent) -> dict:
    """Inverse of :func:`parse_record` in the canonical layout."""
    p = ev.payload
    if isinstance(p, BookPayload):
        payload = {"bids": [list(x) for x in p.bids], "asks": [list(x) for x in p.asks]}
    elif isinstance(p, PriceChangePayload):
        payload = {
            "changes": [{"side": s, "price": px, "size": sz} for s, px, sz in p.changes],
            "best_bid": p.best_bid,
            "best_ask": p.best_ask,
        }
    elif isinstance(p, TradePayload):
        payload = {"price": p.price, "size": p.size, "side": p.side, "fee": p.fee, "tx_hash": p.tx_hash}
    else:
        payload = {"tick_size": p.tick_size}
    return {
        "timestamp_received": ev.timestamp_received,
        "timestamp": ev.timestamp,
        "event_type": ev.event_type,
        "market": ev.market_id,
        "asset_id": ev.asset_id,
        "seq": ev.seq,
        "payload": payload,
    }


def dumps_event(ev: RawEvent | CleanEvent) -> str:
    return json.dumps(event_to_record(ev), separators=(",", ":"))


@dataclass
class LoadStats:
    lines: int = 0
    malformed: int = 0
    unknown_type: int = 0
    out_of_range: int = 0

    @property
    def rejected(self) -> int:
        return self.malformed + self.unknown_type + self.out_of_range


def iter_jsonl(path: str | Path) -> Iterator[str]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield line


def load_events(paths: str | Path | Sequence[str | Path], strict: bool = False) -> tuple[list[RawEvent], LoadStats]:
    """Parse one or more JSONL files; rejected lines are counted unless ``strict``."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    stats = LoadStats()
    out: list[RawEvent] = []
    for path in paths:
        for line in iter_jsonl(path):
            stats.lines += 1
            try:
                out.append(parse_event(line))
            except UnknownEventType:
                if strict:
                    raise
                stats.unknown_type += 1
            except OutOfRangePrice:
                if strict:
                    raise
                stats.out_of_range += 1
            except MalformedRecord:
                if strict:
                    raise
                stats.malformed += 1
    return out, stats


def group_by_market(events: Iterable[RawEvent]) -> dict[str, list[RawEvent]]:
    out: dict[str, list[RawEvent]] = {}
    for ev in events:
        out.setdefault(ev.market_id, []).append(ev)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------- cleaning


@dataclass
class CleaningStats:
    input_events: int = 0
    output_events: int = 0
    duplicates: int = 0
    conflicts: int = 0
    malformed_numeric: int = 0
    dormant_books: int = 0
    reordered: int = 0


def _finite_price(p) -> bool:
    return p is not None and math.isfinite(p) and 0.0 <= p <= 1.0


def _finite_size(s) -> bool:
    return math.isfinite(s) and s >= 0.0


def _numeric_ok(ev: RawEvent) -> bool:
    if ev.timestamp_received <= 0:
        return False
    p = ev.payload
    if isinstance(p, BookPayload):
        return all(_finite_price(px) and _finite_size(sz) for px, sz in p.bids + p.asks)
    if isinstance(p, PriceChangePayload):
        if not all(_finite_price(px) and _finite_size(sz) for _, px, sz in p.changes):
            return False
        return all(v is None or _finite_price(v) for v in (p.best_bid, p.best_ask))
    if isinstance(p, TradePayload):
        return _finite_price(p.price) and _finite_size(p.size) and math.isfinite(p.fee)
    return math.isfinite(p.tick_size) and p.tick_size > 0


def clean_stream(events: Sequence[RawEvent]) -> tuple[list[CleanEvent], CleaningStats]:
    """Sort, de-duplicate and validate one market's events.

    Exact duplicates are dropped.  A repeated ``(timestamp_received, seq)`` key
    with a different body keeps the first occurrence and counts a conflict.
    Empty two-sided snapshots are kept and flagged as dormancy markers.
    """
    stats = CleaningStats(input_events=len(events))
    for prev, cur in zip(events, events[1:]):
        if (cur.timestamp_received, cur.seq) < (prev.timestamp_received, prev.seq):
            stats.reordered += 1
    order = sorted(range(len(events)), key=lambda i: (events[i].timestamp_received, events[i].seq, i))
    seen: dict[tuple[int, int], RawEvent] = {}
    out: list[CleanEvent] = []
    for i in order:
        ev = events[i]
        if not _numeric_ok(ev):
            stats.malformed_numeric += 1
            continue
        key = (ev.timestamp_received, ev.seq)
        first = seen.get(key)
        if first is not None:
            if first == ev:
                stats.duplicates += 1
            else:
                stats.conflicts += 1
            continue
        seen[key] = ev
        dormant = isinstance(ev.payload, BookPayload) and ev.payload.empty
        stats.dormant_books += dormant
        out.append(
            CleanEvent(
                ev.timestamp_received, ev.timestamp, ev.event_type, ev.market_id,
                ev.asset_id, ev.seq, ev.payload, len(out), dormant,
            )
        )
    stats.output_events = len(out)
    return out, stats


# ---------------------------------------------------------------- books


@dataclass
class OrderBookState:
    bids: dict[float, float] = field(default_factory=dict)
    asks: dict[float, float] = field(default_factory=dict)
    last_snapshot_ts: int | None = None
    as_of_ts: int = 0
    tick_size: float | None = None
    last_trade_price: float | None = None
    last_trade_size: float | None = None

    def best_bid(self) -> float | None:
        return max(self.bids) if self.bids else None

    def best_ask(self) -> float | None:
        return min(self.asks) if self.asks else None

    def mid(self) -> float | None:
        if not self.bids or not self.asks:
            return None
        return (max(self.bids) + min(self.asks)) / 2.0

    def bid_levels(self) -> list[tuple[float, float]]:
        """Bids from best (highest) to worst."""
        return sorted(self.bids.items(), reverse=True)

    def ask_levels(self) -> list[tuple[float, float]]:
        """Asks from best (lowest) to worst."""
        return sorted(self.asks.items())

    def copy(self) -> "OrderBookState":
        return OrderBookState(
            dict(self.bids), dict(self.asks), self.last_snapshot_ts, self.as_of_ts,
            self.tick_size, self.last_trade_price, self.last_trade_size,
        )


def _apply_inplace(book: OrderBookState, ev: CleanEvent | RawEvent) -> None:
    ts = ev.timestamp_received
    if ts < book.as_of_ts:
        raise StaleEvent(f"event at {ts} precedes book state at {book.as_of_ts}")
    p = ev.payload
    if isinstance(p, BookPayload):
        book.bids = {px: sz for px, sz in p.bids if sz > 0}
        book.asks = {px: sz for px, sz in p.asks if sz > 0}
        book.last_snapshot_ts = ts
    elif isinstance(p, PriceChangePayload):
        bids, asks = book.bids, book.asks
        for side, px, sz in p.changes:
            levels = bids if side == "bid" else asks
            if sz > 0:
                levels[px] = sz
            else:
                levels.pop(px, None)
    elif isinstance(p, TradePayload):
        book.last_trade_price = p.price
        book.last_trade_size = p.size
    else:
        book.tick_size = p.tick_size
    book.as_of_ts = ts


def apply_event(book: OrderBookState, ev: CleanEvent | RawEvent) -> OrderBookState:
    """Return the book after ``ev``; the input book is left untouched."""
    out = book.copy()
    _apply_inplace(out, ev)
    return out


class BookReplayer:
    """Single-owner mutable book for sequential replay of one market.

    Deltas that arrive before the first snapshot are ignored because there is
    no base state to overwrite.
    """

    def __init__(self) -> None:
        self.book = OrderBookState()
        self.has_snapshot = False

    def apply(self, ev: CleanEvent | RawEvent) -> bool:
        if ev.event_type == BOOK:
            self.has_snapshot = True
        elif not self.has_snapshot:
            return False
        _apply_inplace(self.book, ev)
        return True


def _ts_key(ev) -> int:
    return ev.timestamp_received


def book_at(events: Sequence[CleanEvent], t: int) -> OrderBookState:
    """Latest snapshot at or before ``t`` plus all later events up to ``t``."""
    end = bisect_right(events, t, key=_ts_key)
    start = end - 1
    while start >= 0 and events[start].event_type != BOOK:
        start -= 1
    if start < 0:
        raise NoSnapshotBefore(t)
    book = OrderBookState()
    for k in range(start, end):
        _apply_inplace(book, events[k])
    return book


def reconstruction_agreement(events: Sequence[CleanEvent]) -> tuple[int, int]:
    """Count price_change events whose rebuilt best bid/ask equal the feed fields."""
    rep = BookReplayer()
    book = rep.book
    matches = total = 0
    for ev in events:
        if not rep.apply(ev) or ev.event_type != PRICE_CHANGE:
            continue
        total += 1
        p = ev.payload
        bb = max(book.bids) if book.bids else None
        ba = min(book.asks) if book.asks else None
        if bb == p.best_bid and ba == p.best_ask:
            matches += 1
    return matches, total


@dataclass(frozen=True, slots=True)
class DepthProfile:
    bid_depth_within: float
    ask_depth_within: float
    window_bps: float

    @property
    def total(self) -> float:
        return self.bid_depth_within + self.ask_depth_within


def depth_within(book: OrderBookState, mid: float | None, window_bps: float = 200) -> DepthProfile:
    """Displayed size within ``window_bps`` of ``mid`` on each side.

    Levels are summed in price order so the result does not depend on the
    history that built the level maps.
    """
    if window_bps <= 0:
        raise ValueError("window_bps must be positive")
    if mid is None:
        return DepthProfile(0.0, 0.0, window_bps)
    w = window_bps / 10_000.0 + _EDGE_EPS
    bid = 0.0
    for px in sorted(book.bids, reverse=True):
        if mid - px > w:
            break
        if abs(px - mid) <= w:
            bid += book.bids[px]
    ask = 0.0
    for px in sorted(book.asks):
        if px - mid > w:
            break
        if abs(px - mid) <= w:
            ask += book.asks[px]
    return DepthProfile(bid, ask, window_bps)
