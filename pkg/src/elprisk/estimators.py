"""Data-estimated inputs of the risk engine.

Realized volatility of the index path, the jump-hazard table, the EMA-VWAP
component, the one-shot manipulation-cost proxy and the resolution-clarity
flag, together with loaders for the news-window and resolution files.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyTrainingSet, MissingMid, MissingValue, NonMonotoneTimestamps
from .ingest import MS_PER_HOUR, OrderBookState, iter_jsonl

DEFAULT_TTR_EDGES = (1.0, 3.0, 12.0, 24.0)
DEFAULT_INDEX_EDGES = (0.1, 0.3, 0.7, 0.9)
I_FLOOR = 0.005


# ---------------------------------------------------------------- volatility


@dataclass(frozen=True)
class VolEstimate:
    sigma: float
    window_hours: float
    n_increments: int
    boundary_mode_used: bool


def path_increment(prev: float, cur: float, floor: float = I_FLOOR) -> tuple[float, bool]:
    """Log increment, or the linear one when either endpoint is near a boundary."""
    if prev <= floor or prev >= 1.0 - floor or cur <= floor or cur >= 1.0 - floor:
        return cur - prev, True
    return math.log(cur / prev), False


def _ts_of(pt) -> int:
    return pt[0]


def realized_vol(
    index_path: Sequence[tuple[int, float]],
    t: int,
    window_hours: float = 1.0,
    floor: float = I_FLOOR,
) -> VolEstimate:
    """Root mean squared increment over updates with timestamps in ``[t - W, t)``.

    Each update in the window contributes the increment from its predecessor
    (which may lie before the window).  Zero increments are not counted, so
    repeating an unchanged value leaves the estimate untouched.
    """
    if window_hours <= 0:
        raise ValueError("window_hours must be positive")
    lo_ts = t - window_hours * MS_PER_HOUR
    lo = bisect_left(index_path, lo_ts, key=_ts_of)
    hi = bisect_left(index_path, t, key=_ts_of)
    first = max(lo, 1)
    for j in range(max(lo - 1, 0) + 1, hi):
        if index_path[j][0] < index_path[j - 1][0]:
            raise NonMonotoneTimestamps(f"timestamp decreases at position {j}")
    total = 0.0
    n = 0
    boundary = False
    for j in range(first, hi):
        inc, linear = path_increment(index_path[j - 1][1], index_path[j][1], floor)
        boundary = boundary or linear
        if inc == 0.0:
            continue
        total += inc * inc
        n += 1
    sigma = math.sqrt(total / n) if n else 0.0
    return VolEstimate(sigma, window_hours, n, boundary)


# ---------------------------------------------------------------- EMA-VWAP


def ema_vwap(trades: Sequence[tuple[int, float, float]], n_events: int = 200, alpha: float = 0.005) -> float:
    """Size-weighted EMA over the trailing ``n_events`` trades of positive size.

    The recursion ``num <- (1-a) num + a p s``, ``den <- (1-a) den + a s`` starts
    from zero at the oldest trade in the window and returns ``num / den``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    window: list[tuple[float, float]] = []
    for k in range(len(trades) - 1, -1, -1):
        _, price, size = trades[k]
        if size > 0:
            window.append((price, size))
            if len(window) == n_events:
                break
    if not window:
        raise MissingValue("no trades with positive size")
    window.reverse()
    return ema_recursion(window, alpha)


def ema_recursion(window: Iterable[tuple[float, float]], alpha: float) -> float:
    keep = 1.0 - alpha
    num = den = 0.0
    for price, size in window:
        num = keep * num + alpha * price * size
        den = keep * den + alpha * size
    return num / den


# ---------------------------------------------------------------- news and resolutions


@dataclass(frozen=True)
class NewsWindow:
    market_class: str
    start_ts: int
    end_ts: int
    label: str = ""

    def __post_init__(self) -> None:
        if not self.start_ts < self.end_ts:
            raise ValueError("news window needs start_ts < end_ts")

    def overlaps(self, lo: int, hi: int) -> bool:
        return self.start_ts <= hi and lo <= self.end_ts


def load_news_windows(path: str | Path) -> list[NewsWindow]:
    out = []
    for line in iter_jsonl(path):
        rec = json.loads(line)
        out.append(NewsWindow(str(rec["class"]), int(rec["start_ts"]), int(rec["end_ts"]), str(rec.get("label", ""))))
    return out


def news_active(windows: Sequence[NewsWindow], t: int, horizon_hours: float) -> bool:
    hi = t + horizon_hours * MS_PER_HOUR
    return any(w.overlaps(t, hi) for w in windows)


@dataclass(frozen=True)
class ResolutionRecord:
    market_id: str
    outcome: int | None
    resolution_ts: int | None
    disputed: bool = False
    oracle_source: str = ""

    @property
    def resolved(self) -> bool:
        return self.outcome in (0, 1) and self.resolution_ts is not None


def load_resolutions(path: str | Path) -> dict[str, ResolutionRecord]:
    out = {}
    for line in iter_jsonl(path):
        rec = json.loads(line)
        outcome = rec.get("outcome")
        ts = rec.get("resolution_ts")
        out[str(rec["market"])] = ResolutionRecord(
            market_id=str(rec["market"]),
            outcome=None if outcome is None else int(outcome),
            resolution_ts=None if ts is None else int(ts),
            disputed=bool(rec.get("disputed", False)),
            oracle_source=str(rec.get("oracle_source", "")),
        )
    return out


def resolution_clarity(record: ResolutionRecord | None) -> int | None:
    """1 when resolved without dispute, 0 when disputed, None when unresolved."""
    if record is None or not record.resolved:
        return None
    return 0 if record.disputed else 1


# ---------------------------------------------------------------- jump hazard


@dataclass(frozen=True)
class HazardConfig:
    ttr_edges: tuple[float, ...] = DEFAULT_TTR_EDGES
    index_edges: tuple[float, ...] = DEFAULT_INDEX_EDGES
    smoothing_alpha: float = 1.0
    horizon_hours: float = 1.0
    jump_threshold: float = 0.10
    sample_step_minutes: float = 15.0


@dataclass(frozen=True)
class HazardSample:
    """One training market: its index path, resolution and news schedule."""

    index_path: Sequence[tuple[int, float]]
    resolution: ResolutionRecord
    news: Sequence[NewsWindow] = ()


Cell = tuple[int, int, bool]


@dataclass(frozen=True)
class HazardTable:
    ttr_bins: tuple[float, ...]
    index_regions: tuple[float, ...]
    cell_prob: Mapping[Cell, float]
    smoothing_alpha: float = 1.0
    global_rate: float = 0.5
    exposures: Mapping[Cell, int] = field(default_factory=dict)
    jumps: Mapping[Cell, int] = field(default_factory=dict)

    @property
    def news_flag(self) -> tuple[bool, bool]:
        return (False, True)

    def cell(self, ttr: float, index: float, news: bool) -> Cell:
        return (ttr_bin(self.ttr_bins, ttr), index_region(self.index_regions, index), bool(news))

    @classmethod
    def uninformed(cls, config: HazardConfig = HazardConfig()) -> "HazardTable":
        """The table a fit on zero exposures would produce: 1/2 everywhere."""
        rate = config.smoothing_alpha / (2.0 * config.smoothing_alpha)
        cells = {c: rate for c in _all_cells(config.ttr_edges, config.index_edges)}
        return cls(config.ttr_edges, config.index_edges, cells, config.smoothing_alpha, rate)

    @classmethod
    def constant(cls, p: float, config: HazardConfig = HazardConfig()) -> "HazardTable":
        cells = {c: p for c in _all_cells(config.ttr_edges, config.index_edges)}
        return cls(config.ttr_edges, config.index_edges, cells, config.smoothing_alpha, p)

    def to_dict(self) -> dict:
        return {
            "ttr_bins": list(self.ttr_bins),
            "index_regions": list(self.index_regions),
            "smoothing_alpha": self.smoothing_alpha,
            "global_rate": self.global_rate,
            "cells": [
                {"ttr_bin": c[0], "region": c[1], "news": c[2], "prob": self.cell_prob[c],
                 "exposures": self.exposures.get(c, 0), "jumps": self.jumps.get(c, 0)}
                for c in sorted(self.cell_prob)
            ],
        }


    @classmethod
    def from_dict(cls, d: Mapping) -> "HazardTable":
        """Inverse of :meth:`to_dict`."""
        probs, exposures, jumps = {}, {}, {}
        for c in d["cells"]:
            key = (int(c["ttr_bin"]), int(c["region"]), bool(c["news"]))
            probs[key] = float(c["prob"])
            exposures[key] = int(c.get("exposures", 0))
            jumps[key] = int(c.get("jumps", 0))
        return cls(tuple(d["ttr_bins"]), tuple(d["index_regions"]), probs,
                   float(d.get("smoothing_alpha", 1.0)), float(d.get("global_rate", 0.5)), exposures, jumps)

def ttr_bin(edges: Sequence[float], ttr: float) -> int:
    # half-open (lo, hi]: an edge value belongs to the lower bin; beyond the
    # last edge clamps to the open-ended final bin
    return bisect_left(edges, ttr)


def index_region(edges: Sequence[float], index: float) -> int:
    return bisect_left(edges, index)


def _all_cells(ttr_edges, index_edges) -> list[Cell]:
    return [
        (a, b, n)
        for a in range(len(ttr_edges) + 1)
        for b in range(len(index_edges) + 1)
        for n in (False, True)
    ]


def _value_at(path: Sequence[tuple[int, float]], t: float) -> float | None:
    k = bisect_right(path, t, key=_ts_of) - 1
    return path[k][1] if k >= 0 else None


def fit_jump_hazard(training_markets: Iterable[HazardSample], config: HazardConfig = HazardConfig()) -> HazardTable:
    """Laplace-smoothed jump frequency per (ttr bin, index region, news) cell.

    Each market is sampled every ``sample_step_minutes`` from its first index
    update until resolution.  A sample is a jump when the index moves by more
    than ``jump_threshold`` over the following ``horizon_hours``; the index at
    or after resolution is the outcome itself.
    """
    alpha = config.smoothing_alpha
    exposures: dict[Cell, int] = {}
    jumps: dict[Cell, int] = {}
    step = config.sample_step_minutes * 60_000
    horizon = config.horizon_hours * MS_PER_HOUR
    n_markets = 0
    for sample in training_markets:
        res = sample.resolution
        path = sample.index_path
        if not res.resolved or not path:
            continue
        n_markets += 1
        tau = res.resolution_ts
        t = float(path[0][0])
        while t < tau:
            now = _value_at(path, t)
            end_t = t + horizon
            later = float(res.outcome) if end_t >= tau else _value_at(path, end_t)
            ttr = (tau - t) / MS_PER_HOUR
            cell = (
                ttr_bin(config.ttr_edges, ttr),
                index_region(config.index_edges, now),
                news_active(sample.news, int(t), config.horizon_hours),
            )
            exposures[cell] = exposures.get(cell, 0) + 1
            if abs(later - now) > config.jump_threshold:
                jumps[cell] = jumps.get(cell, 0) + 1
            t += step
    total_exp = sum(exposures.values())
    if n_markets == 0 or total_exp == 0:
        raise EmptyTrainingSet("no resolved training market produced an exposure")
    total_jumps = sum(jumps.values())
    global_rate = (total_jumps + alpha) / (total_exp + 2 * alpha)
    cells = {}
    for c in _all_cells(config.ttr_edges, config.index_edges):
        n = exposures.get(c, 0)
        cells[c] = (jumps.get(c, 0) + alpha) / (n + 2 * alpha) if n else global_rate
    return HazardTable(config.ttr_edges, config.index_edges, cells, alpha, global_rate, exposures, jumps)


def eval_jump_hazard(table: HazardTable, ttr: float, index: float, news_active: bool) -> float:
    p = table.cell_prob.get(table.cell(ttr, index, news_active), table.global_rate)
    return min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------- manipulation cost


@dataclass(frozen=True)
class ManipCost:
    kappa: float
    target_delta: float
    reached: bool


def manip_cost(book: OrderBookState, index: float | None, target_delta: float = 0.05) -> ManipCost:
    """Notional needed to lift every displayed ask strictly below ``index + delta``."""
    if target_delta <= 0:
        raise ValueError("target_delta must be positive")
    if index is None:
        raise MissingMid("manipulation cost needs an index value")
    threshold = index + target_delta
    kappa = 0.0
    reached = False
    for px, sz in book.ask_levels():
        if px < threshold - 1e-12:
            kappa += px * sz
        else:
            reached = True
            break
    return ManipCost(kappa, target_delta, reached)
