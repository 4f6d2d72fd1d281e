"""Breach detection, depth-sized tranche liquidation and insurance-fund accounting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

from .account import AccountState
from .errors import ClosedAccount, MissingMid
from .ingest import OrderBookState, depth_within

AT_MID = "at_mid"
WALK_BOOK = "walk_book"
ExecutionMode = Literal["at_mid", "walk_book"]

OK = "ok"
BREACH = "breach"


@dataclass(frozen=True)
class LiquidationParams:
    eta_trnch: float = 0.25
    delta_trnch: float = 60.0
    cascade_ratio: float = 1.0
    throttle_factor: float = 0.5
    phi_fund: float = 0.05
    min_lot: float = 1.0
    execution_mode: str = WALK_BOOK
    near_mid_bps: float = 200.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta_trnch <= 1.0:
            raise ValueError("eta_trnch must lie in (0, 1]")
        if not 0.0 < self.throttle_factor <= 1.0:
            raise ValueError("throttle_factor must lie in (0, 1]")
        if self.execution_mode not in (AT_MID, WALK_BOOK):
            raise ValueError(f"unknown execution mode {self.execution_mode!r}")


@dataclass
class LiquidationQueue:
    pending: list[tuple[str, float]] = field(default_factory=list)

    @property
    def lam(self) -> float:
        return sum(r for _, r in self.pending)

    def push(self, account_id: str, remaining: float) -> None:
        self.pending.append((account_id, remaining))

    def update(self, account_id: str, remaining: float) -> None:
        self.pending = [(a, remaining if a == account_id else r) for a, r in self.pending]
        self.pending = [(a, r) for a, r in self.pending if r > 0]


@dataclass(frozen=True)
class InsuranceFund:
    balance: float
    initial_size: float
    bad_debt_events: int = 0
    total_drawdown: float = 0.0

    @classmethod
    def sized(cls, open_interest: float, phi_fund: float) -> "InsuranceFund":
        size = phi_fund * open_interest
        return cls(size, size)


@dataclass(frozen=True)
class TranchePlan:
    size: float
    forced: bool


@dataclass(frozen=True)
class Fill:
    price: float | None
    quantity: float
    levels: int = 0


def margin_check(account: AccountState, mark: float, maintenance: float) -> str:
    """``breach`` iff equity including open PnL is strictly below maintenance."""
    if not account.open:
        raise ClosedAccount("margin check on a closed account")
    return BREACH if account.equity_at(mark) < maintenance else OK


def plan_tranches(remaining: float, depth: float, p: LiquidationParams = LiquidationParams()) -> TranchePlan:
    if remaining <= 0:
        raise ValueError("remaining must be positive")
    if depth <= 0:
        return TranchePlan(min(remaining, p.min_lot), True)
    return TranchePlan(min(remaining, p.eta_trnch * depth), False)


def throttle_factor(lam: float, depth: float, p: LiquidationParams = LiquidationParams()) -> float:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    return 1.0 if lam <= p.cascade_ratio * depth else p.throttle_factor


def walk_fill(book: OrderBookState, side_sign: int, quantity: float) -> Fill:
    """Close ``quantity``: a long sells into bids, a short lifts asks."""
    levels = book.bid_levels() if side_sign > 0 else book.ask_levels()
    left = quantity
    cost = 0.0
    used = 0
    for px, sz in levels:
        if left <= 0:
            break
        take = sz if sz < left else left
        cost += take * px
        left -= take
        used += 1
    filled = quantity - left if left > 0 else quantity
    if filled <= 0:
        return Fill(None, 0.0, 0)
    return Fill(cost / filled, filled, used)


def mid_fill(book: OrderBookState, side_sign: int, quantity: float, window_bps: float) -> Fill:
    mid = book.mid()
    if mid is None:
        raise MissingMid("at-mid execution needs a two-sided book")
    prof = depth_within(book, mid, window_bps)
    available = prof.bid_depth_within if side_sign > 0 else prof.ask_depth_within
    filled = min(quantity, available)
    if filled <= 0:
        return Fill(None, 0.0, 0)
    return Fill(mid, filled, 1)


def apply_fill(account: AccountState, fill: Fill) -> AccountState:
    if fill.quantity <= 0:
        return account
    realized = account.sign * fill.quantity * (fill.price - account.entry_price)
    left = account.notional - fill.quantity
    if left <= 1e-12 * max(1.0, account.notional):
        left = 0.0
    return replace(account, notional=left, equity=account.equity + realized, open=left > 0)


def execute_tranche(
    account: AccountState,
    book: OrderBookState,
    tranche: float,
    mode: str = WALK_BOOK,
    near_mid_bps: float = 200.0,
) -> tuple[Fill, AccountState]:
    if tranche > account.notional + 1e-12:
        raise ValueError("tranche exceeds the open position")
    if mode == AT_MID:
        fill = mid_fill(book, account.sign, tranche, near_mid_bps)
    elif mode == WALK_BOOK:
        fill = walk_fill(book, account.sign, tranche)
    else:
        raise ValueError(f"unknown execution mode {mode!r}")
    return fill, apply_fill(account, fill)


def settle_shortfall(account: AccountState, fund: InsuranceFund) -> InsuranceFund:
    """Route a negative final equity to the fund; the account is then treated as zero."""
    if account.open:
        raise ValueError("shortfall settles only on a fully closed account")
    return absorb_bad_debt(fund, -account.equity if account.equity < 0 else 0.0)


def absorb_bad_debt(fund: InsuranceFund, amount: float) -> InsuranceFund:
    if amount <= 0:
        return fund
    return replace(
        fund,
        balance=fund.balance - amount,
        bad_debt_events=fund.bad_debt_events + 1,
        total_drawdown=fund.total_drawdown + amount,
    )
