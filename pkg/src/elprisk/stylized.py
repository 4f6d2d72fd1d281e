"""Stylized facts of prediction-market books and the two threshold tests on them.

All medians use the lower order statistic for even counts.  Per-market
statistics are computed first and then pooled, so a market with many
observations counts once.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ingest import MS_PER_HOUR, BookReplayer, depth_within
from .marketpath import MarketData, MarketPath, PathSettings

RHO_FLOOR = 1.5
JUMP_FLOOR = 0.10
BOUNDARY_DELTA = 0.10
REGION_EDGES = (0.1, 0.3, 0.7, 0.9)
REGION_LABELS = ("[0,0.1]", "(0.1,0.3]", "(0.3,0.7]", "(0.7,0.9]", "(0.9,1]")
PROFILE_BPS = (1, 5, 25, 100, 200, 500)
TTR_BUCKETS = ((12.0, 24.0), (3.0, 12.0), (1.0, 3.0), (5.0 / 60.0, 1.0), (0.0, 5.0 / 60.0))
TTR_LABELS = ("[24h,12h)", "[12h,3h)", "[3h,1h)", "[1h,5min)", "[5min,0)")
DAY_MS = 24 * MS_PER_HOUR


def lower_median(values: Iterable[float]) -> float | None:
    s = sorted(values)
    if not s:
        return None
    return s[(len(s) - 1) // 2]


def nearest_rank(values: Sequence[float], q: float) -> float | None:
    """Order statistic at rank ceil(q * n), the smallest value covering fraction ``q``."""
    s = sorted(values)
    if not s:
        return None
    k = max(1, math.ceil(q * len(s) - 1e-9))
    return s[min(k, len(s)) - 1]


def region_of(index: float, edges: Sequence[float] = REGION_EDGES) -> int:
    for k, e in enumerate(edges):
        if index <= e:
            return k
    return len(edges)


def _path(m: MarketData, settings: PathSettings) -> MarketPath:
    return m.path(settings)


def _by_class(per_market: dict[str, float], markets: Sequence[MarketData]) -> dict[str, float]:
    groups: dict[str, list[float]] = {}
    for m in markets:
        if m.market_id in per_market:
            groups.setdefault(m.event_class, []).append(per_market[m.market_id])
    return {c: lower_median(v) for c, v in sorted(groups.items())}


# ---------------------------------------------------------------- SF1 / SF2


def market_depth_ratio(m: MarketData, delta: float = BOUNDARY_DELTA, settings: PathSettings = PathSettings()) -> float | None:
    """Time-median of bid over ask depth within the window while the index is below ``delta``."""
    p = _path(m, settings)
    end = p.count_before(m.tau)
    ratios = [p.bid_depth[i] / p.ask_depth[i] for i in range(end)
              if p.idx[i] is not None and p.idx[i] < delta and p.ask_depth[i] > 0]
    return lower_median(ratios)


def sf1_depth_asymmetry(markets: Sequence[MarketData], delta: float = BOUNDARY_DELTA, floor: float = RHO_FLOOR,
                        settings: PathSettings = PathSettings()) -> dict:
    per = {}
    for m in markets:
        r = market_depth_ratio(m, delta, settings)
        if r is not None:
            per[m.market_id] = r
    pooled = lower_median(per.values())
    return {"per_market": per, "per_class": _by_class(per, markets), "pooled": pooled,
            "floor": floor, "pass": pooled is not None and pooled >= floor}


def terminal_jump(m: MarketData, settings: PathSettings = PathSettings()) -> float | None:
    """|index at the last observation in the final hour minus outcome|; None for a dark market."""
    if not m.resolved:
        return None
    p = _path(m, settings)
    tau = m.tau
    lo, hi = p.count_before(tau - MS_PER_HOUR), p.count_before(tau)
    if not any(p.has_price_change[lo:hi]):
        return None
    for i in range(hi - 1, lo - 1, -1):
        if p.idx[i] is not None:
            return abs(p.idx[i] - m.outcome)
    return None


def sf2_terminal_jump(markets: Sequence[MarketData], floor: float = JUMP_FLOOR,
                      settings: PathSettings = PathSettings()) -> dict:
    per = {}
    dark = 0
    for m in markets:
        if not m.resolved:
            continue
        v = terminal_jump(m, settings)
        if v is None:
            dark += 1
        else:
            per[m.market_id] = v
    pooled = lower_median(per.values())
    return {"per_market": per, "per_class": _by_class(per, markets), "pooled": pooled, "dark": dark,
            "floor": floor, "pass": pooled is not None and pooled >= floor}


# ---------------------------------------------------------------- SF3 to SF8


def sf3_basis_near_news(markets: Sequence[MarketData], control_offset_hours: float = 24.0,
                        settings: PathSettings = PathSettings()) -> dict:
    """Median |reference price - composite index| inside news windows and in shifted control windows."""
    news_vals: list[float] = []
    ctrl_vals: list[float] = []
    shift = int(control_offset_hours * MS_PER_HOUR)
    for m in markets:
        if not m.news:
            continue
        p = _path(m, settings)
        for w in m.news:
            for lo, hi, sink in ((w.start_ts, w.end_ts, news_vals), (w.start_ts - shift, w.end_ts - shift, ctrl_vals)):
                a, b = p.count_before(lo), bisect_right(p.ts, hi)
                for i in range(a, b):
                    if p.ref[i] is not None and p.idx[i] is not None:
                        sink.append(abs(p.ref[i] - p.idx[i]))
    return {"news_median": lower_median(news_vals), "control_median": lower_median(ctrl_vals),
            "news_n": len(news_vals), "control_n": len(ctrl_vals)}


def market_half_spreads(m: MarketData, settings: PathSettings = PathSettings()) -> dict[int, float]:
    """Volume-weighted quoted half-spread at trades, per index region."""
    p = _path(m, settings)
    num: dict[int, float] = {}
    den: dict[int, float] = {}
    for t, _, size in p.trades:
        i = bisect_right(p.ts, t) - 1
        if i < 0 or size <= 0 or p.idx[i] is None:
            continue
        bb, ba = p.best_bid[i], p.best_ask[i]
        if bb is None or ba is None:
            continue
        r = region_of(p.idx[i])
        num[r] = num.get(r, 0.0) + size * (ba - bb) / 2.0
        den[r] = den.get(r, 0.0) + size
    return {r: num[r] / den[r] for r in sorted(num)}


def sf4_half_spread_by_region(markets: Sequence[MarketData], settings: PathSettings = PathSettings()) -> dict:
    groups: dict[int, list[float]] = {}
    for m in markets:
        for r, hs in market_half_spreads(m, settings).items():
            groups.setdefault(r, []).append(hs)
    return {REGION_LABELS[r]: {"median": lower_median(groups[r]), "markets": len(groups[r])} for r in sorted(groups)}


def depth_series(m: MarketData, windows_bps: Sequence[float]) -> tuple[list[int], dict[float, list[float]]]:
    """Total displayed depth within each window after every distinct timestamp."""
    rep = BookReplayer()
    ts: list[int] = []
    out: dict[float, list[float]] = {w: [] for w in windows_bps}
    ev = m.events
    k, n = 0, len(ev)
    while k < n:
        t = ev[k].timestamp_received
        while k < n and ev[k].timestamp_received == t:
            rep.apply(ev[k])
            k += 1
        if not rep.has_snapshot:
            continue
        mid = rep.book.mid()
        ts.append(t)
        for w in windows_bps:
            out[w].append(depth_within(rep.book, mid, w).total)
    return ts, out


def sf5_depth_profile(markets: Sequence[MarketData], distances_bps: Sequence[float] = PROFILE_BPS) -> dict:
    per: dict[float, list[float]] = {d: [] for d in distances_bps}
    for m in markets:
        ts, series = depth_series(m, distances_bps)
        end = bisect_right(ts, m.tau - 1)
        for d in distances_bps:
            v = lower_median(series[d][:end])
            if v is not None:
                per[d].append(v)
    return {str(d): lower_median(per[d]) for d in distances_bps}


def sf6_trade_sizes(markets: Sequence[MarketData], settings: PathSettings = PathSettings()) -> dict:
    groups: dict[str, list[float]] = {}
    for m in markets:
        sizes = [s for _, _, s in _path(m, settings).trades if s > 0]
        groups.setdefault(m.event_class, []).extend(sizes)
    return {c: {"median": lower_median(v), "mean": sum(v) / len(v), "p99": nearest_rank(v, 0.99), "n": len(v)}
            for c, v in sorted(groups.items()) if v}


def sf7_activity_by_hour(markets: Sequence[MarketData]) -> dict:
    out: dict[str, list[int]] = {}
    for m in markets:
        row = out.setdefault(m.event_class, [0] * 24)
        for ev in m.events:
            row[(ev.timestamp_received // MS_PER_HOUR) % 24] += 1
    return dict(sorted(out.items()))


def surge_ratio(m: MarketData) -> float | None:
    """Final-24h event count over the market's own daily event rate before that."""
    if not m.events:
        return None
    cut = m.tau - DAY_MS
    first = m.events[0].timestamp_received
    if cut <= first:
        return None
    prior = sum(1 for ev in m.events if ev.timestamp_received < cut)
    final = sum(1 for ev in m.events if cut <= ev.timestamp_received < m.tau)
    rate = prior / ((cut - first) / DAY_MS)
    return final / rate if rate > 0 else None


def sf8_resolution_surge(markets: Sequence[MarketData]) -> dict:
    per = {}
    for m in markets:
        r = surge_ratio(m)
        if r is not None:
            per[m.market_id] = r
    return {"per_class": _by_class(per, markets), "pooled": lower_median(per.values())}


# ---------------------------------------------------------------- SF9


def ttr_bucket(ttr_hours: float) -> int | None:
    for k, (lo, hi) in enumerate(TTR_BUCKETS):
        if lo < ttr_hours <= hi:
            return k
    return None


def sf9_depth_by_ttr(markets: Sequence[MarketData], windows_bps: Sequence[float] = (200.0, 50.0)) -> dict:
    pooled: dict[float, list[list[float]]] = {w: [[] for _ in TTR_BUCKETS] for w in windows_bps}
    for m in markets:
        if not m.resolved:
            continue
        ts, series = depth_series(m, windows_bps)
        buckets = [ttr_bucket((m.tau - t) / MS_PER_HOUR) for t in ts]
        for w in windows_bps:
            per: list[list[float]] = [[] for _ in TTR_BUCKETS]
            for b, d in zip(buckets, series[w]):
                if b is not None:
                    per[b].append(d)
            for b, vals in enumerate(per):
                v = lower_median(vals)
                if v is not None:
                    pooled[w][b].append(v)
    out = {}
    for w in windows_bps:
        medians = [lower_median(v) for v in pooled[w]]
        out[str(w)] = {"medians": dict(zip(TTR_LABELS, medians)), "contraction_factors": contraction_factors(medians)}
    return out


def contraction_factors(medians: Sequence[float | None]) -> list[float | None]:
    """Ratio of each later bucket's median depth to the one before it."""
    return [b / a if a not in (None, 0) and b is not None else None for a, b in zip(medians, medians[1:])]


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class SfReport:
    sf1: dict
    sf2: dict
    sf3: dict
    sf4: dict
    sf5: dict
    sf6: dict
    sf7: dict
    sf8: dict
    sf9: dict

    @property
    def verdicts(self) -> dict[str, bool]:
        return {"E1.1": self.sf1["pass"], "E1.2": self.sf2["pass"]}

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("sf1", "sf2", "sf3", "sf4", "sf5", "sf6", "sf7", "sf8", "sf9")}
        d["e1"] = self.verdicts
        return d


def stylized_facts(markets: Sequence[MarketData], settings: PathSettings = PathSettings()) -> SfReport:
    return SfReport(
        sf1=sf1_depth_asymmetry(markets, settings=settings),
        sf2=sf2_terminal_jump(markets, settings=settings),
        sf3=sf3_basis_near_news(markets, settings=settings),
        sf4=sf4_half_spread_by_region(markets, settings),
        sf5=sf5_depth_profile(markets),
        sf6=sf6_trade_sizes(markets, settings),
        sf7=sf7_activity_by_hour(markets),
        sf8=sf8_resolution_surge(markets),
        sf9=sf9_depth_by_ttr(markets),
    )
