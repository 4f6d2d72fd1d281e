"""Engine wirings E0, E1, E2 and the deterministic single-position replay.

A position is opened on an observed market path and carried through every
observation: the engine's index, volatility, jump hazard and margin are read
at each step, funding accrues on a fixed clock, resolution-zone stages apply,
and a maintenance breach hands the position to tranche liquidation.  Nothing
is sampled, so the same inputs always give the same outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .account import side_sign
from .errors import InconsistentConfig, NoEntryQuote
from .estimators import HazardTable, eval_jump_hazard
from .funding import FundingParams, funding_aware, funding_naive
from .index import IndexParams
from .ingest import MS_PER_HOUR
from .liquidation import (
    AT_MID,
    LiquidationParams,
    mid_fill,
    plan_tranches,
    throttle_factor,
    walk_fill,
)
from .errors import MissingMid
from .margin import MarginParams, dynamic_leverage_cap, initial_margin, leverage_cap
from .marketpath import MarketData, MarketPath, PathSettings
from .resolution import MechanicId, ProtocolSchedule, Stage, mechanic_constraints, stage_at

REFERENCE = "reference_direct"
COMPOSITE = "composite"
STATIC_VOL = "static_vol"
JUMP_AWARE = "jump_aware"
NAIVE = "naive"
AWARE = "aware"
CONSTANT = "constant"
COMPRESSED = "compressed"

SURVIVED = "survived"
LIQUIDATED = "liquidated"
SETTLED = "settled"
HALT_CLOSED = "halt_closed"

LEVERAGE_LEVELS = (1, 2, 3, 5, 10)

_WIRING = {
    "E0": (REFERENCE, STATIC_VOL, NAIVE, CONSTANT, MechanicId.R0),
    "E1": (REFERENCE, JUMP_AWARE, NAIVE, COMPRESSED, MechanicId.R0),
    "E2": (COMPOSITE, JUMP_AWARE, AWARE, COMPRESSED, MechanicId.R3),
}

# Mechanic comparison engines: R0 is the naive port, R3 the full protocol.
_MECHANIC_WIRING = {
    MechanicId.R0: _WIRING["E0"],
    MechanicId.R1: (COMPOSITE, JUMP_AWARE, NAIVE, COMPRESSED, MechanicId.R1),
    MechanicId.R2: (COMPOSITE, JUMP_AWARE, AWARE, COMPRESSED, MechanicId.R2),
    MechanicId.R3: _WIRING["E2"],
}


@dataclass(frozen=True)
class EngineParams:
    index: IndexParams = IndexParams()
    margin: MarginParams = MarginParams()
    funding: FundingParams = FundingParams()
    liquidation: LiquidationParams = LiquidationParams()
    vol_window_hours: float = 1.0
    vol_floor: float = 0.005
    static_leverage_cap: float = 10.0
    mark_basis: float = 0.0
    sports_delta_R: float = 3.0
    default_delta_R: float = 1.0
    delta_disp: float = 1.0

    @property
    def path_settings(self) -> PathSettings:
        return PathSettings(self.index, self.vol_window_hours, self.vol_floor, self.margin.H_M)


@dataclass(frozen=True)
class EngineConfig:
    id: str
    index_source: str
    margin_mode: str
    funding_mode: str
    leverage_mode: str
    resolution_mechanic: MechanicId
    params: EngineParams = EngineParams()

    def schedule(self, event_class: str) -> ProtocolSchedule:
        p = self.params
        return ProtocolSchedule.for_class(event_class, p.sports_delta_R, p.default_delta_R, p.delta_disp)


def _wire(engine_id: str, wiring: tuple, params: EngineParams, overrides: dict) -> EngineConfig:
    names = ("index_source", "margin_mode", "funding_mode", "leverage_mode", "resolution_mechanic")
    unknown = set(overrides) - set(names)
    if unknown:
        raise InconsistentConfig(f"unknown engine fields {sorted(unknown)}")
    for name, value in zip(names, wiring):
        if name in overrides and overrides[name] != value:
            raise InconsistentConfig(f"{engine_id} requires {name}={value!s}, got {overrides[name]!s}")
    return EngineConfig(engine_id, *wiring, params=params)


def build_engine(engine_id: str, params: EngineParams | None = None, **overrides) -> EngineConfig:
    """Canonical wiring for E0, E1 or E2; conflicting overrides are rejected."""
    if engine_id not in _WIRING:
        raise InconsistentConfig(f"unknown engine {engine_id!r}")
    return _wire(engine_id, _WIRING[engine_id], params or EngineParams(), overrides)


def build_mechanic_engine(mechanic: MechanicId | str, params: EngineParams | None = None) -> EngineConfig:
    """Engine used in the resolution-mechanic comparison for R0 to R3."""
    m = MechanicId(mechanic)
    return _wire(m.value, _MECHANIC_WIRING[m], params or EngineParams(), {})


@dataclass(frozen=True)
class PositionSpec:
    side: str = "long"
    leverage: float = 1.0
    notional: float = 1.0
    entry_ts: int | None = None
    exit_ts: int | None = None

    def __post_init__(self) -> None:
        side_sign(self.side)
        if not self.leverage >= 1:
            raise ValueError("leverage must be >= 1")
        if not self.notional > 0:
            raise ValueError("notional must be positive")


@dataclass(frozen=True)
class TrancheFill:
    ts: int
    quantity: float
    price: float | None
    forced: bool


@dataclass(frozen=True)
class PositionOutcome:
    terminal: str
    final_pnl: float
    liquidation_ts: int | None
    bad_debt: float
    max_drawdown: float
    entry_ts: int
    entry_price: float
    collateral: float
    close_ts: int | None = None
    deleveraged: float = 0.0
    fills: tuple[TrancheFill, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.bad_debt > 0 and self.terminal == SURVIVED:
            raise ValueError("bad debt requires a liquidated, settled or halt-closed position")


_FUNDING, _COMPRESS, _HALT, _EXIT = range(4)


class _Replay:
    """Mutable account state for one position on one path."""

    def __init__(self, engine: EngineConfig, market: MarketData, spec: PositionSpec, hazard: HazardTable):
        self.engine = engine
        self.p = engine.params
        self.hazard = hazard
        self.path: MarketPath = market.path(self.p.path_settings)
        self.tau = market.tau
        self.outcome = market.outcome
        self.schedule = engine.schedule(market.event_class)
        self.mechanic = engine.resolution_mechanic
        self.values, self.sigmas = self.path.series(engine.index_source)
        self.spec = spec
        self.sign = side_sign(spec.side)

    def run(self) -> PositionOutcome:
        path, spec, p = self.path, self.spec, self.p
        end = path.count_before(self.tau)
        start = path.entry_index(spec.entry_ts, self.tau)
        if start is None:
            raise NoEntryQuote(f"no valid index at or after {spec.entry_ts} in {path.market.market_id}")
        t0 = path.ts[start]
        e = self.values[start]
        self.entry_ts, self.entry_price = t0, e
        self.x = spec.notional
        self.collateral = spec.notional * e / spec.leverage
        self.equity = self.collateral
        self.maint_static = p.margin.mu * self.collateral
        self.index = e
        self.liquidating = False
        self.liq_ts: int | None = None
        self.next_tranche = 0.0
        self.terminal: str | None = None
        self.close_ts: int | None = None
        self.fills: list[TrancheFill] = []
        self.deleveraged = 0.0
        self.peak = self.collateral
        self.max_dd = 0.0

        if stage_at(t0, self.tau, self.schedule, self.mechanic) is Stage.HALT:
            return self._result(self.collateral, 0.0)

        step = p.funding.interval_hours * MS_PER_HOUR
        self.funding_next = t0 + step
        self.funding_step = step
        staged = self.mechanic is not MechanicId.R0
        self.compress_at = self.schedule.compression_start(self.tau) if staged else None
        if self.compress_at is not None and self.compress_at <= t0:
            self.compress_at = None
        self.halt_at = self.schedule.halt_start(self.tau) if self.mechanic is MechanicId.R3 else None
        self.exit_at = spec.exit_ts

        self._observe(start)
        for i in range(start + 1, end):
            if self.terminal is not None:
                break
            self._clock(path.ts[i], inclusive=True)
            if self.terminal is not None:
                break
            self._observe(i)
        if self.terminal is None:
            self._clock(self.tau, inclusive=False)
        if self.terminal is None:
            self._settle()
        final = self.equity if self.x == 0 else self._total()
        self._track(final)
        return self._result(final, max(0.0, -final) if self.x == 0 else 0.0)

    def _result(self, final: float, bad_debt: float) -> PositionOutcome:
        return PositionOutcome(
            terminal=self.terminal or HALT_CLOSED,
            final_pnl=final - self.collateral,
            liquidation_ts=self.liq_ts,
            bad_debt=bad_debt,
            max_drawdown=self.max_dd,
            entry_ts=self.entry_ts,
            entry_price=self.entry_price,
            collateral=self.collateral,
            close_ts=self.close_ts if self.terminal else self.entry_ts,
            deleveraged=self.deleveraged,
            fills=tuple(self.fills),
        )

    # account arithmetic

    def _mark(self) -> float:
        return self.index + self.p.mark_basis

    def _total(self) -> float:
        return self.equity + self.sign * self.x * (self._mark() - self.entry_price)

    def _track(self, total: float) -> None:
        if total > self.peak:
            self.peak = total
        dd = self.peak - total
        if dd > self.max_dd:
            self.max_dd = dd

    def _close_all(self, price: float, ts: int, terminal: str) -> None:
        self.equity += self.sign * self.x * (price - self.entry_price)
        self.x = 0.0
        self.terminal = terminal
        self.close_ts = ts

    def _comply(self, cap: float) -> None:
        """Partially close at the index so that notional exposure stays within ``cap`` times equity."""
        total = self._total()
        if total <= 0 or self.index <= 0:
            return
        if self.x * self.index > cap * total:
            target = cap * total / self.index
            q = self.x - target
            self.equity += self.sign * q * (self.index - self.entry_price)
            self.x = target
            self.deleveraged += q

    # clock events between observations

    def _clock(self, limit: float, inclusive: bool) -> None:
        while self.terminal is None:
            due = []
            if self.funding_next < self.tau:
                due.append((self.funding_next, _FUNDING))
            if self.compress_at is not None:
                due.append((self.compress_at, _COMPRESS))
            if self.halt_at is not None:
                due.append((self.halt_at, _HALT))
            if self.exit_at is not None:
                due.append((self.exit_at, _EXIT))
            if not due:
                return
            when, kind = min(due)
            if when > limit or (when == limit and not inclusive):
                return
            if kind == _FUNDING:
                self._fund()
                self.funding_next += self.funding_step
            elif kind == _COMPRESS:
                self.compress_at = None
                if not self.liquidating:
                    self._comply(1.0)
            elif kind == _HALT:
                self.halt_at = None
                self._close_all(self.index, int(when), LIQUIDATED if self.liquidating else HALT_CLOSED)
            else:
                self.exit_at = None
                if not self.liquidating:
                    self._close_all(self.index, int(when), SURVIVED)

    def _fund(self) -> None:
        mark, index = self._mark(), self.index
        if self.engine.funding_mode == AWARE and 0.0 < index < 1.0:
            ttr = (self.tau - self.funding_next) / MS_PER_HOUR
            rate = funding_aware(mark, index, ttr, self.p.funding)
        else:
            rate = funding_naive(mark, index, self.p.funding.c)
        self.equity += -self.sign * rate * self.x * self.p.funding.interval_hours

    # observations

    def _observe(self, i: int) -> None:
        path, p = self.path, self.p
        t = path.ts[i]
        value = self.values[i]
        if value is not None:
            self.index = value
        if self.liquidating:
            if t >= self.next_tranche:
                self._tranche(i)
        else:
            ttr = (self.tau - t) / MS_PER_HOUR
            sigma = self.sigmas[i]
            if self.engine.margin_mode == JUMP_AWARE:
                pi = eval_jump_hazard(self.hazard, ttr, self.index, path.news[i])
            else:
                pi = 0.0
            if self.engine.leverage_mode == COMPRESSED:
                cap = min(
                    leverage_cap(ttr, p.margin),
                    dynamic_leverage_cap(sigma, pi, ttr, self.index, p.margin),
                )
                override = mechanic_constraints(
                    self.mechanic, stage_at(t, self.tau, self.schedule, self.mechanic), ttr, p.margin
                ).leverage_cap_override
                if override is not None and override < cap:
                    cap = override
                self._comply(cap)
            if self.engine.margin_mode == JUMP_AWARE:
                q = initial_margin(self.x, sigma, pi, ttr, self.index, path.depth[i], p.margin)
                maint = p.margin.mu * q.initial
            else:
                maint = self.maint_static
            if self._total() < maint:
                self.liquidating = True
                self.liq_ts = t
                self._tranche(i)
        self._track(self._total() if self.x > 0 else self.equity)

    def _tranche(self, i: int) -> None:
        lp = self.p.liquidation
        depth = self.path.depth[i]
        plan = plan_tranches(self.x, depth, lp)
        size = plan.size if plan.forced else plan.size * throttle_factor(self.x, depth, lp)
        book = self.path.book(i)
        if lp.execution_mode == AT_MID:
            try:
                fill = mid_fill(book, self.sign, size, lp.near_mid_bps)
            except MissingMid:
                fill = None
        else:
            fill = walk_fill(book, self.sign, size)
        t = self.path.ts[i]
        self.next_tranche = t + lp.delta_trnch * 1000.0
        if fill is None or fill.quantity <= 0:
            self.fills.append(TrancheFill(t, 0.0, None, plan.forced))
            return
        self.fills.append(TrancheFill(t, fill.quantity, fill.price, plan.forced))
        self.equity += self.sign * fill.quantity * (fill.price - self.entry_price)
        left = self.x - fill.quantity
        self.x = 0.0 if left <= 1e-12 * max(1.0, self.spec.notional) else left
        if self.x == 0.0:
            self.terminal = LIQUIDATED
            self.close_ts = t

    def _settle(self) -> None:
        if self.outcome is None:
            if self.liquidating:
                self.terminal = LIQUIDATED
            else:
                self.terminal = SURVIVED
            return
        self._close_all(float(self.outcome), self.tau, LIQUIDATED if self.liquidating else SURVIVED)
        if self.terminal == SURVIVED and self.equity < 0:
            self.terminal = SETTLED


def simulate_position(
    engine: EngineConfig,
    market: MarketData,
    spec: PositionSpec,
    hazard: HazardTable | None = None,
) -> PositionOutcome:
    """Replay one position on one market path under ``engine``."""
    return _Replay(engine, market, spec, hazard or HazardTable.uninformed()).run()


def simulate_market(
    engine: EngineConfig,
    market: MarketData,
    specs: Sequence[PositionSpec],
    hazard: HazardTable | None = None,
) -> list[PositionOutcome]:
    return [simulate_position(engine, market, s, hazard) for s in specs]


def with_params(engine: EngineConfig, **changes) -> EngineConfig:
    return replace(engine, params=replace(engine.params, **changes))
