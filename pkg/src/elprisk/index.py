"""Composite robust index: a depth-weighted median of three price estimators.

The estimators are the simple mid, a volume-weighted mid over quotes near the
mid, and the EMA-VWAP of recent trades.  Thin books shade the value toward
1/2 and a confidence score reports how much the value can be trusted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import MissingValue, NoComponents
from .estimators import ema_vwap
from .ingest import DepthProfile, OrderBookState, depth_within


@dataclass(frozen=True)
class IndexParams:
    theta: float = 1.0
    eps_thin: float = 0.01
    d_min: float = 100.0
    d_ref: float = 1000.0
    window_bps: float = 200.0
    vwap_events: int = 200
    vwap_alpha: float = 0.005
    confidence_eps: float = 1e-9


@dataclass(frozen=True)
class IndexComponents:
    mid: float | None
    depth_protected_mid: float | None
    vwap: float | None
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def present(self) -> list[tuple[float, float]]:
        vals = (self.mid, self.depth_protected_mid, self.vwap)
        return [(v, w) for v, w in zip(vals, self.weights) if v is not None]


@dataclass(frozen=True)
class IndexValue:
    value: float
    confidence: float
    thin_penalty_applied: bool
    components_used: int


def depth_protected_mid(book: OrderBookState, window_bps: float = 200.0) -> float | None:
    """Volume-weighted price of the quotes within ``window_bps`` of the simple mid."""
    mid = book.mid()
    if mid is None:
        return None
    w = window_bps / 10_000.0 + 1e-9
    num = 0.0
    bid_size = ask_size = 0.0
    for px in sorted(book.bids, reverse=True):
        if mid - px > w:
            break
        sz = book.bids[px]
        num += px * sz
        bid_size += sz
    for px in sorted(book.asks):
        if px - mid > w:
            break
        sz = book.asks[px]
        num += px * sz
        ask_size += sz
    if bid_size <= 0 or ask_size <= 0:
        return None
    return num / (bid_size + ask_size)


def lwm(values: Sequence[float | None], weights: Sequence[float]) -> float:
    """Weighted median: first sorted value whose cumulative weight reaches half.

    Missing values drop out together with their weights; if every remaining
    weight is zero the unweighted (lower) median is returned.
    """
    pairs = [(v, w) for v, w in zip(values, weights) if v is not None]
    if not pairs:
        raise NoComponents("no index component available")
    if any(w < 0 for _, w in pairs):
        raise ValueError("weights must be non-negative")
    pairs.sort(key=lambda vw: vw[0])
    total = sum(w for _, w in pairs)
    if total <= 0:
        pairs = [(v, 1.0) for v, _ in pairs]
        total = float(len(pairs))
    half = total / 2.0
    cum = 0.0
    for v, w in pairs:
        cum += w
        if cum >= half:
            return v
    return pairs[-1][0]


def confidence_score(
    components_used: int,
    depth: float,
    bid_depth: float,
    ask_depth: float,
    d_ref: float = 1000.0,
    eps: float = 1e-9,
) -> float:
    if components_used <= 1:
        return 0.0
    if depth < 0 or bid_depth < 0 or ask_depth < 0:
        raise ValueError("depths must be non-negative")
    size_term = min(depth / d_ref, 1.0)
    balance = 1.0 - abs(bid_depth - ask_depth) / (bid_depth + ask_depth + eps)
    return min(max(size_term * balance, 0.0), 1.0)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def composite_index(
    components: IndexComponents,
    depth: DepthProfile | float,
    params: IndexParams = IndexParams(),
) -> IndexValue:
    """Weighted median of the present components with the thin-book shading."""
    present = components.present()
    if not present:
        raise NoComponents("no index component available")
    value = lwm([v for v, _ in present], [w for _, w in present])
    if isinstance(depth, DepthProfile):
        d, bid, ask = depth.total, depth.bid_depth_within, depth.ask_depth_within
    else:
        d = float(depth)
        bid = ask = d / 2.0
    thin = d < params.d_min
    ref = components.mid if components.mid is not None else value
    shift = params.theta * params.eps_thin * _sign(ref - 0.5) if thin else 0.0
    value = min(max(value - shift, 0.0), 1.0)
    conf = confidence_score(len(present), d, bid, ask, params.d_ref, params.confidence_eps)
    return IndexValue(value, conf, thin and shift != 0.0, len(present))


def index_from_book(
    book: OrderBookState,
    trades: Sequence[tuple[int, float, float]],
    params: IndexParams = IndexParams(),
) -> tuple[IndexValue | None, DepthProfile]:
    """Build all three components from a book and a trade history and combine them.

    Every component is computed at the query instant, so all weights equal the
    current depth within the window.
    """
    mid = book.mid()
    prof = depth_within(book, mid, params.window_bps)
    dpm = depth_protected_mid(book, params.window_bps)
    try:
        vwap = ema_vwap(trades, params.vwap_events, params.vwap_alpha)
    except MissingValue:
        vwap = None
    d = prof.total
    comps = IndexComponents(mid, dpm, vwap, (d, d, d))
    if not comps.present():
        return None, prof
    return composite_index(comps, prof, params), prof
