"""Basis-only funding and the boundary-corrected resolution-aware rate."""

from __future__ import annotations

from dataclasses import dataclass

from .account import AccountState
from .errors import DegenerateIndex


@dataclass(frozen=True)
class FundingParams:
    c: float = 0.001
    beta_F: float = 0.5
    delta_b: float = 0.10
    ramp_hours: float = 12.0
    H_M: float = 1.0
    interval_hours: float = 1.0

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.beta_F < 0:
            raise ValueError("beta_F must be non-negative")
        if not 0.0 < self.delta_b < 0.5:
            raise ValueError("delta_b must lie in (0, 0.5)")
        if self.interval_hours <= 0:
            raise ValueError("interval_hours must be positive")


def relbasis(mark: float, index: float) -> float:
    """Basis scaled by the distance of the index to its nearer boundary."""
    if index <= 0.0 or index >= 1.0:
        raise DegenerateIndex(f"index {index} sits on a boundary")
    return (mark - index) / min(index, 1.0 - index)


def funding_naive(mark: float, index: float, c: float = 0.001) -> float:
    return c * (mark - index)


def time_weight(ttr: float, p: FundingParams = FundingParams()) -> float:
    """g(ttr) = 1 + ramp / (ttr + H_M): grows toward resolution, bounded at ttr = 0."""
    return 1.0 + p.ramp_hours / (max(ttr, 0.0) + p.H_M)


def boundary_indicator(index: float, delta_b: float) -> bool:
    return index < delta_b or index > 1.0 - delta_b


def funding_aware(mark: float, index: float, ttr: float, p: FundingParams = FundingParams()) -> float:
    if index <= 0.0 or index >= 1.0:
        raise DegenerateIndex(f"index {index} sits on a boundary")
    g = time_weight(ttr, p)
    rate = p.c * g * (mark - index)
    if boundary_indicator(index, p.delta_b):
        rate += p.beta_F * p.c * g * relbasis(mark, index)
    return rate


def funding_payment(side_sign: int, rate: float, notional: float, hours: float) -> float:
    """Cash flow to the account: longs pay a positive rate, shorts receive it."""
    if hours < 0:
        raise ValueError("hours must be non-negative")
    return -side_sign * rate * notional * hours


def accrue_funding(account: AccountState, rate: float, hours: float) -> AccountState:
    flow = funding_payment(account.sign, rate, account.notional, hours)
    return account.with_equity(account.equity + flow)
