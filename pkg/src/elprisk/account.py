"""Margin account of a single leveraged position."""

from __future__ import annotations

from dataclasses import dataclass, replace

LONG = "long"
SHORT = "short"


def side_sign(side: str) -> int:
    if side == LONG:
        return 1
    if side == SHORT:
        return -1
    raise ValueError(f"side must be 'long' or 'short', got {side!r}")


@dataclass(frozen=True)
class AccountState:
    """``equity`` is the cash balance: posted margin plus realized PnL and funding.

    Open PnL is added on demand through :meth:`equity_at`.
    """

    side: str
    notional: float
    entry_price: float
    equity: float
    leverage_at_entry: float
    open: bool = True
    liquidated_at: int | None = None

    def __post_init__(self) -> None:
        side_sign(self.side)
        if self.notional < 0:
            raise ValueError("notional must be non-negative")

    @property
    def sign(self) -> int:
        return side_sign(self.side)

    def unrealized(self, mark: float) -> float:
        return self.sign * self.notional * (mark - self.entry_price)

    def equity_at(self, mark: float) -> float:
        return self.equity + self.unrealized(mark)

    def with_equity(self, equity: float) -> "AccountState":
        return replace(self, equity=equity)


def open_account(side: str, notional: float, entry_price: float, leverage: float) -> AccountState:
    if leverage < 1:
        raise ValueError("leverage must be >= 1")
    return AccountState(side, notional, entry_price, notional * entry_price / leverage, leverage)
