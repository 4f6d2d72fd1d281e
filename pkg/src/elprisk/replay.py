"""Counterfactual replay experiments, falsification floors and sensitivity sweeps.

Every experiment is split into a per-market cell function and an aggregation
over cells.  The split lets the command line checkpoint after each market and
resume a stopped run without changing the final report: aggregation depends
only on the cells, sorted by market id.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingMetric, NoEntryQuote, NoResolvedMarkets, OutOfRange, UnknownAxis
from .estimators import HazardTable
from .ingest import MS_PER_HOUR
from .engines import (
    LEVERAGE_LEVELS,
    EngineConfig,
    EngineParams,
    PositionSpec,
    build_engine,
    build_mechanic_engine,
    simulate_position,
)
from .marketpath import MarketData

ENGINE_IDS = ("E0", "E1", "E2")
MECHANIC_IDS = ("R0", "R1", "R2", "R3")
E3_LEVERAGES = (2, 3, 5, 10)


@dataclass(frozen=True)
class GridSpec:
    sides: tuple[str, ...] = ("long", "short")
    leverages: tuple[float, ...] = LEVERAGE_LEVELS
    notionals: tuple[float, ...] = (100.0, 1000.0, 10000.0)
    entry_offsets_hours: tuple[float, ...] = (24.0, 12.0, 6.0, 1.0)

    def __post_init__(self) -> None:
        if not (self.sides and self.leverages and self.notionals and self.entry_offsets_hours):
            raise ValueError("grid axes must be non-empty")


@dataclass(frozen=True)
class TraderPopSpec:
    n_traders: int = 200
    seed: int = 0
    leverage_median: float = 3.0
    leverage_sigma: float = 0.6
    leverage_min: float = 1.0
    leverage_max: float = 10.0
    notional: float = 1000.0
    signal_hours: float = 1.0
    entry_threshold: float = 0.02
    take_profit: float = 0.5
    stop_loss: float = 0.5
    timeout_hours: float = 12.0
    trend_following: bool = True

    def __post_init__(self) -> None:
        if self.n_traders < 1:
            raise ValueError("n_traders must be >= 1")
        if not 1.0 <= self.leverage_min <= self.leverage_max:
            raise ValueError("need 1 <= leverage_min <= leverage_max")


def _engines(ids: Iterable[str], params: EngineParams | None) -> list[EngineConfig]:
    return [build_engine(i, params) for i in ids]


def _safe(engine, market, spec, hazard):
    try:
        return simulate_position(engine, market, spec, hazard)
    except NoEntryQuote:
        return None


def _sorted_cells(cells: Iterable[dict]) -> list[dict]:
    return sorted(cells, key=lambda c: (c["market"], c.get("engine", ""), c.get("leverage", 0),
                                        c.get("side", ""), c.get("notional", 0), c.get("offset", 0)))


def lower_median(values: Sequence[float]) -> float | None:
    if not values:
        return None
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def signed_change(base: float, treat: float) -> float:
    """Relative change of ``treat`` against ``base``; negative means a reduction."""
    if base == 0:
        return 0.0 if treat == 0 else math.inf
    return (treat - base) / base


def _pct(values: Sequence[float], q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=float), q)) if values else 0.0


# ---------------------------------------------------------------- E2a


def e2a_cells(
    market: MarketData,
    engine_ids: Sequence[str] = ENGINE_IDS,
    leverages: Sequence[float] = LEVERAGE_LEVELS,
    sides: Sequence[str] = ("long", "short"),
    params: EngineParams | None = None,
    hazard: HazardTable | None = None,
) -> list[dict]:
    """One unit position per (engine, leverage, side), entered at the first valid index."""
    out = []
    for engine in _engines(engine_ids, params):
        for lev in leverages:
            for side in sides:
                o = _safe(engine, market, PositionSpec(side, lev, 1.0), hazard)
                if o is None:
                    continue
                out.append({
                    "market": market.market_id, "class": market.event_class, "engine": engine.id,
                    "leverage": lev, "side": side, "terminal": o.terminal,
                    "breached": o.liquidation_ts is not None, "liquidation_ts": o.liquidation_ts,
                    "bad_debt": o.bad_debt, "final_pnl": o.final_pnl,
                })
    return out


def aggregate_e2a(cells: Iterable[dict]) -> dict:
    cells = _sorted_cells(cells)
    counts: dict[str, dict[str, list[int]]] = {}
    for c in cells:
        row = counts.setdefault(c["engine"], {})
        n = row.setdefault(str(c["leverage"]), [0, 0])
        n[0] += 1
        n[1] += int(c["breached"])
    survival = {e: {lev: 1.0 - b / n for lev, (n, b) in row.items()} for e, row in counts.items()}
    liq_rate = {e: {lev: b / n for lev, (n, b) in row.items()} for e, row in counts.items()}
    return {"survival": survival, "liquidation_rate": liq_rate,
            "cells": len(cells), "markets": len({c["market"] for c in cells})}


def run_e2a(markets: Sequence[MarketData], engine_ids: Sequence[str] = ENGINE_IDS, **kw) -> dict:
    if not markets:
        raise ValueError("run_e2a needs at least one market")
    cells = [c for m in markets for c in e2a_cells(m, engine_ids, **kw)]
    return aggregate_e2a(cells)


# ---------------------------------------------------------------- E2b


def _resolved(markets: Sequence[MarketData]) -> list[MarketData]:
    out = [m for m in markets if m.resolved]
    if not out:
        raise NoResolvedMarkets("E2b and E3 need resolved markets")
    return out


def e2b_cells(
    market: MarketData,
    engine_ids: Sequence[str] = ENGINE_IDS,
    grid: GridSpec = GridSpec(),
    params: EngineParams | None = None,
    hazard: HazardTable | None = None,
) -> list[dict]:
    if not market.resolved:
        return []
    out = []
    for engine in _engines(engine_ids, params):
        for off in grid.entry_offsets_hours:
            entry = int(market.tau - off * MS_PER_HOUR)
            for side in grid.sides:
                for lev in grid.leverages:
                    for x in grid.notionals:
                        o = _safe(engine, market, PositionSpec(side, lev, x, entry_ts=entry), hazard)
                        if o is None:
                            continue
                        out.append({
                            "market": market.market_id, "class": market.event_class, "engine": engine.id,
                            "offset": off, "side": side, "leverage": lev, "notional": x,
                            "terminal": o.terminal, "open_interest": x * o.entry_price,
                            "bad_debt": o.bad_debt, "final_pnl": o.final_pnl,
                            "liquidation_ts": o.liquidation_ts,
                        })
    return out


def aggregate_e2b(cells: Iterable[dict], phi_fund: float = 0.05) -> dict:
    cells = _sorted_cells(cells)
    drawdown: dict[str, dict[str, float]] = {}
    oi: dict[str, float] = {}
    pnls: dict[str, list[float]] = {}
    events: dict[str, int] = {}
    for c in cells:
        e = c["engine"]
        row = drawdown.setdefault(e, {})
        row[c["class"]] = row.get(c["class"], 0.0) + c["bad_debt"]
        row["pooled"] = row.get("pooled", 0.0) + c["bad_debt"]
        oi[e] = oi.get(e, 0.0) + c["open_interest"]
        pnls.setdefault(e, []).append(c["final_pnl"])
        events[e] = events.get(e, 0) + int(c["bad_debt"] > 0)
    fund = {e: phi_fund * v for e, v in oi.items()}
    share = {e: (drawdown[e]["pooled"] / fund[e] if fund[e] > 0 else 0.0) for e in drawdown}
    base = share.get("E0")
    rel = {e: signed_change(base, s) for e, s in share.items()} if base is not None else {}
    stats = {e: {"p10": _pct(v, 10), "p50": _pct(v, 50), "mean": float(np.mean(v))} for e, v in pnls.items()}
    return {"drawdown": drawdown, "fund_size": fund, "drawdown_share": share,
            "relative_drawdown_vs_E0": rel, "bad_debt_events": events, "pnl": stats,
            "phi_fund": phi_fund, "cells": len(cells)}


def run_e2b(
    markets: Sequence[MarketData],
    engine_ids: Sequence[str] = ENGINE_IDS,
    grid: GridSpec = GridSpec(),
    phi_fund: float | None = None,
    params: EngineParams | None = None,
    hazard: HazardTable | None = None,
) -> dict:
    resolved = _resolved(markets)
    phi = phi_fund if phi_fund is not None else (params or EngineParams()).liquidation.phi_fund
    cells = [c for m in resolved for c in e2b_cells(m, engine_ids, grid, params, hazard)]
    return aggregate_e2b(cells, phi)


# ---------------------------------------------------------------- E2c


@dataclass(frozen=True)
class TraderPlan:
    trader: int
    market: str
    side: str | None
    leverage: float
    entry_ts: int | None
    exit_ts: int | None


def plan_traders(markets: Sequence[MarketData], pop: TraderPopSpec, params: EngineParams | None = None) -> list[TraderPlan]:
    """Draw each trader's market, start time and leverage, then apply the signal rule.

    Signals are read from the reference price so every engine sees the same
    entry and exit decisions.
    """
    p = params or EngineParams()
    rng = np.random.default_rng(pop.seed)
    ordered = sorted(markets, key=lambda m: m.market_id)
    plans = []
    for k in range(pop.n_traders):
        m = ordered[int(rng.integers(len(ordered)))]
        lev = float(np.clip(rng.lognormal(math.log(pop.leverage_median), pop.leverage_sigma),
                            pop.leverage_min, pop.leverage_max))
        u = float(rng.random())
        path = m.path(p.path_settings)
        end = path.count_before(m.tau)
        if end == 0:
            plans.append(TraderPlan(k, m.market_id, None, lev, None, None))
            continue
        t_lo, t_hi = path.ts[0], path.ts[end - 1]
        start = int(t_lo + u * (t_hi - t_lo))
        plans.append(_signal_plan(k, m, path, end, start, lev, pop))
    return plans


def _signal_plan(k, market, path, end, start, lev, pop: TraderPopSpec) -> TraderPlan:
    ts, ref = path.ts, path.ref
    lag = pop.signal_hours * MS_PER_HOUR
    i0 = path.count_before(start)
    entry = None
    side = None
    for i in range(i0, end):
        if ref[i] is None or path.idx[i] is None:
            continue
        back = bisect_right(ts, ts[i] - lag) - 1
        if back < 0 or ref[back] is None:
            continue
        move = ref[i] - ref[back]
        if abs(move) > pop.entry_threshold:
            up = move > 0
            side = "long" if up == pop.trend_following else "short"
            entry = i
            break
    if entry is None:
        return TraderPlan(k, market.market_id, None, lev, None, None)
    s = 1 if side == "long" else -1
    e = ref[entry]
    margin = e / lev
    deadline = ts[entry] + pop.timeout_hours * MS_PER_HOUR
    exit_ts = None
    for i in range(entry + 1, end):
        r = ref[i]
        if r is None:
            continue
        gain = s * (r - e)
        if gain >= pop.take_profit * margin or gain <= -pop.stop_loss * margin or ts[i] >= deadline:
            exit_ts = ts[i]
            break
    return TraderPlan(k, market.market_id, side, lev, ts[entry], exit_ts)


def run_e2c(
    markets: Sequence[MarketData],
    engine_ids: Sequence[str] = ENGINE_IDS,
    pop: TraderPopSpec = TraderPopSpec(),
    params: EngineParams | None = None,
    hazard: HazardTable | None = None,
) -> dict:
    if not markets:
        raise ValueError("run_e2c needs at least one market")
    by_id = {m.market_id: m for m in markets}
    plans = plan_traders(markets, pop, params)
    out = {}
    for engine in _engines(engine_ids, params):
        pnl = []
        for plan in plans:
            if plan.side is None:
                pnl.append(0.0)
                continue
            spec = PositionSpec(plan.side, plan.leverage, pop.notional, plan.entry_ts, plan.exit_ts)
            o = _safe(engine, by_id[plan.market], spec, hazard)
            pnl.append(0.0 if o is None else o.final_pnl)
        out[engine.id] = {"p10": _pct(pnl, 10), "p50": _pct(pnl, 50), "mean": float(np.mean(pnl)),
                          "pnl": pnl}
    return {"engines": out, "entered": sum(p.side is not None for p in plans),
            "n_traders": pop.n_traders, "seed": pop.seed}


# ---------------------------------------------------------------- E3


def e3_cells(
    market: MarketData,
    mechanics: Sequence[str] = MECHANIC_IDS,
    leverages: Sequence[float] = E3_LEVERAGES,
    sides: Sequence[str] = ("long", "short"),
    entry_offset_hours: float = 24.0,
    notional: float = 1.0,
    params: EngineParams | None = None,
    hazard: HazardTable | None = None,
) -> list[dict]:
    if not market.resolved:
        return []
    tau = market.tau
    entry = int(tau - entry_offset_hours * MS_PER_HOUR)
    final_hour = tau - MS_PER_HOUR
    out = []
    for mech in mechanics:
        engine = build_mechanic_engine(mech, params)
        for lev in leverages:
            for side in sides:
                o = _safe(engine, market, PositionSpec(side, lev, notional, entry_ts=entry), hazard)
                if o is None:
                    continue
                lt = o.liquidation_ts
                out.append({
                    "market": market.market_id, "class": market.event_class, "engine": mech,
                    "leverage": lev, "side": side, "terminal": o.terminal, "liquidation_ts": lt,
                    "final_hour_liquidation": lt is not None and final_hour <= lt < tau,
                    "bad_debt": o.bad_debt, "final_pnl": o.final_pnl,
                })
    return out


def aggregate_e3(cells: Iterable[dict]) -> dict:
    cells = _sorted_cells(cells)
    table: dict[str, dict[str, dict[str, float]]] = {}
    acc: dict[tuple[str, str], list[float]] = {}
    for c in cells:
        for lev in (str(c["leverage"]), "pooled"):
            a = acc.setdefault((c["engine"], lev), [0, 0, 0, 0.0])
            a[0] += 1
            a[1] += int(c["final_hour_liquidation"])
            a[2] += int(c["bad_debt"] > 0)
            a[3] += c["final_pnl"]
    for (mech, lev), (n, fh, bd, pnl) in sorted(acc.items()):
        table.setdefault(mech, {})[lev] = {
            "n": n, "final_hour_liquidation_rate": fh / n, "final_hour_liquidations": fh,
            "bad_debt_frequency": bd / n, "mean_pnl": pnl / n,
        }
    return {"mechanics": table, "cells": len(cells)}


def run_e3(
    markets: Sequence[MarketData],
    mechanics: Sequence[str] = MECHANIC_IDS,
    leverages: Sequence[float] = E3_LEVERAGES,
    **kw,
) -> dict:
    resolved = _resolved(markets)
    cells = [c for m in resolved for c in e3_cells(m, mechanics, leverages, **kw)]
    return aggregate_e3(cells)


# ---------------------------------------------------------------- floors

FLOORS = {
    "e2a_liquidation_rate_L5": -0.30,
    "e2b_drawdown": -0.50,
    "e3_final_hour_liquidation": -0.50,
    "e3_bad_debt": -0.75,
}
WELFARE_MAX_DEGRADATION = 0.30


@dataclass(frozen=True)
class FloorResult:
    name: str
    floor: float
    realized: float
    passed: bool


@dataclass(frozen=True)
class FloorReport:
    results: tuple[FloorResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {r.name: {"floor": r.floor, "realized": r.realized, "pass": r.passed} for r in self.results}


def floor_verdict(realized: float, floor: float) -> bool:
    """A reduction floor passes when the realized change is at or below it."""
    return realized <= floor


def welfare_degradation(w_base: float, w_treat: float) -> float:
    if w_base == 0:
        return 0.0 if w_treat >= 0 else math.inf
    return -(w_treat - w_base) / abs(w_base)


def evaluate_floors(metrics: Mapping[str, tuple[float, float]]) -> FloorReport:
    """``metrics`` maps each floor name, plus ``e3_welfare``, to (baseline, treatment)."""
    results = []
    for name, floor in FLOORS.items():
        if name not in metrics:
            raise MissingMetric(name)
        base, treat = metrics[name]
        realized = signed_change(base, treat)
        results.append(FloorResult(name, floor, realized, floor_verdict(realized, floor)))
    if "e3_welfare" not in metrics:
        raise MissingMetric("e3_welfare")
    deg = welfare_degradation(*metrics["e3_welfare"])
    results.append(FloorResult("e3_welfare", WELFARE_MAX_DEGRADATION, deg, deg <= WELFARE_MAX_DEGRADATION))
    return FloorReport(tuple(results))


def floor_metrics(e2a: Mapping, e2b: Mapping, e3: Mapping) -> dict[str, tuple[float, float]]:
    """Baseline and treatment values for each floor from the experiment reports."""
    lr = e2a["liquidation_rate"]
    l5 = next(k for k in lr["E0"] if float(k) == 5.0)
    r0, r3 = e3["mechanics"]["R0"]["pooled"], e3["mechanics"]["R3"]["pooled"]
    return {
        "e2a_liquidation_rate_L5": (lr["E0"][l5], lr["E2"][l5]),
        "e2b_drawdown": (e2b["drawdown"]["E0"]["pooled"], e2b["drawdown"]["E2"]["pooled"]),
        "e3_final_hour_liquidation": (r0["final_hour_liquidation_rate"], r3["final_hour_liquidation_rate"]),
        "e3_bad_debt": (r0["bad_debt_frequency"], r3["bad_debt_frequency"]),
        "e3_welfare": (r0["mean_pnl"], r3["mean_pnl"]),
    }


# ---------------------------------------------------------------- sensitivity


@dataclass(frozen=True)
class Axis:
    name: str
    group: str | None
    field: str
    lo: float
    hi: float
    discrete: tuple[float, ...] = ()

    def check(self, value: float) -> None:
        if self.discrete:
            if value not in self.discrete:
                raise OutOfRange(f"{self.name}={value} not in {self.discrete}")
        elif not self.lo <= value <= self.hi:
            raise OutOfRange(f"{self.name}={value} outside [{self.lo}, {self.hi}]")


AXES = {a.name: a for a in (
    Axis("c", "funding", "c", 0.0005, 0.002),
    Axis("beta_F", "funding", "beta_F", 0.0, 1.0),
    Axis("delta_b", "funding", "delta_b", 0.05, 0.2),
    Axis("m_sigma", "margin", "m_sigma", 2.0, 4.0),
    Axis("m_J", "margin", "m_J", 0.3, 0.8),
    Axis("S_min", None, "listing_threshold", 0.5, 0.75),
    Axis("mu", "margin", "mu", 0.25, 0.75),
    Axis("eta_trnch", "liquidation", "eta_trnch", 0.1, 0.5),
    Axis("delta_trnch", "liquidation", "delta_trnch", 10.0, 300.0),
    Axis("phi_fund", "liquidation", "phi_fund", 0.01, 0.10, (0.01, 0.02, 0.05, 0.10)),
)}


def apply_axis(params: EngineParams, axis: str, value: float) -> EngineParams:
    if axis not in AXES:
        raise UnknownAxis(axis)
    a = AXES[axis]
    a.check(value)
    if a.group is None:
        return params
    group = getattr(params, a.group)
    return replace(params, **{a.group: replace(group, **{a.field: value})})


@dataclass(frozen=True)
class SweepConfig:
    grid: GridSpec = GridSpec(leverages=(2.0, 5.0, 10.0), notionals=(100.0,), entry_offsets_hours=(24.0, 6.0))
    e2a_leverages: tuple[float, ...] = (5.0,)
    e3_leverages: tuple[float, ...] = (5.0,)
    scores: Mapping[str, float] = field(default_factory=dict)


def headline_metrics(
    markets: Sequence[MarketData],
    params: EngineParams,
    config: SweepConfig = SweepConfig(),
    listing_threshold: float | None = None,
    hazard: HazardTable | None = None,
) -> dict:
    listed = [m for m in markets
              if listing_threshold is None or config.scores.get(m.market_id, 1.0) >= listing_threshold]
    out: dict = {"listed_markets": len(listed)}
    if not listed:
        return out
    e2a = run_e2a(listed, ("E0", "E2"), leverages=config.e2a_leverages, params=params, hazard=hazard)
    out["e2a_liquidation_rate"] = {e: r for e, r in e2a["liquidation_rate"].items()}
    if any(m.resolved for m in listed):
        e2b = run_e2b(listed, ("E0", "E2"), config.grid, params=params, hazard=hazard)
        out["e2b_drawdown"] = {e: r["pooled"] for e, r in e2b["drawdown"].items()}
        out["e2b_relative_drawdown"] = e2b["relative_drawdown_vs_E0"]
        e3 = run_e3(listed, ("R0", "R3"), config.e3_leverages, params=params, hazard=hazard)
        out["e3"] = {m: r["pooled"] for m, r in e3["mechanics"].items()}
    return out


def sensitivity_sweep(
    markets: Sequence[MarketData],
    axis: str,
    values: Sequence[float],
    base: EngineParams | None = None,
    config: SweepConfig = SweepConfig(),
    hazard: HazardTable | None = None,
    on_point: Callable[[float, dict], None] | None = None,
) -> list[dict]:
    """Headline metrics at each grid value of one axis, all other parameters held at base."""
    if axis not in AXES:
        raise UnknownAxis(axis)
    if not values:
        raise OutOfRange("sweep grid is empty")
    base = base or EngineParams()
    for v in values:
        AXES[axis].check(v)
    reports = []
    for v in values:
        params = apply_axis(base, axis, v)
        threshold = v if axis == "S_min" else None
        metrics = headline_metrics(markets, params, config, threshold, hazard)
        report = {"axis": axis, "value": v, "metrics": metrics}
        reports.append(report)
        if on_point is not None:
            on_point(v, report)
    return reports

