"""Resolution-zone state machine and the four zone mechanics R0 to R3.

R0 holds positions straight through resolution.  R1 adds the leverage
compression schedule, R2 additionally switches to boundary-aware funding, and
R3 adds a trading halt that force-closes open positions at the index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .account import AccountState
from .errors import UnresolvedMarket
from .ingest import MS_PER_HOUR
from .liquidation import InsuranceFund, absorb_bad_debt
from .margin import MarginParams, leverage_cap


class Stage(str, Enum):
    NORMAL = "normal"
    COMPRESSION = "compression"
    HALT = "halt"
    SETTLEMENT = "settlement"


class MechanicId(str, Enum):
    R0 = "R0"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"


SPORTS_CLASSES = frozenset({"sports"})


@dataclass(frozen=True)
class ProtocolSchedule:
    delta_R: float = 1.0
    delta_A: float = 2.0
    delta_B: float = 1.0
    delta_disp: float = 1.0

    def __post_init__(self) -> None:
        if not self.delta_A > self.delta_B > 0:
            raise ValueError("need delta_A > delta_B > 0")
        if self.delta_disp < 0:
            raise ValueError("delta_disp must be non-negative")

    @classmethod
    def for_class(cls, event_class: str, sports_hours: float = 3.0, default_hours: float = 1.0,
                  delta_disp: float = 1.0) -> "ProtocolSchedule":
        dr = sports_hours if event_class in SPORTS_CLASSES else default_hours
        return cls(dr, 2.0 * dr, dr, delta_disp)

    def compression_start(self, tau: int) -> float:
        return tau - self.delta_A * MS_PER_HOUR

    def halt_start(self, tau: int) -> float:
        return tau - self.delta_B * MS_PER_HOUR


def stage_at(t: float, tau: int, s: ProtocolSchedule, mechanic: MechanicId | str) -> Stage:
    mechanic = MechanicId(mechanic)
    if t >= tau:
        return Stage.SETTLEMENT
    if mechanic is MechanicId.R0:
        return Stage.NORMAL
    if mechanic is MechanicId.R3 and t >= s.halt_start(tau):
        return Stage.HALT
    if t >= s.compression_start(tau):
        return Stage.COMPRESSION
    return Stage.NORMAL


@dataclass(frozen=True)
class MechanicConstraints:
    orders_allowed: bool
    leverage_cap_override: float | None
    funding_rule: str
    force_close: bool = False


def mechanic_constraints(
    mechanic: MechanicId | str,
    stage: Stage | str,
    ttr: float,
    margin: MarginParams = MarginParams(),
) -> MechanicConstraints:
    mechanic = MechanicId(mechanic)
    stage = Stage(stage)
    funding = "aware" if mechanic in (MechanicId.R2, MechanicId.R3) else "naive"
    if stage is Stage.SETTLEMENT:
        return MechanicConstraints(False, 1.0 if mechanic is not MechanicId.R0 else None, funding)
    if mechanic is MechanicId.R0:
        return MechanicConstraints(True, None, funding)
    if stage is Stage.HALT:
        return MechanicConstraints(False, 1.0, funding, force_close=True)
    if stage is Stage.COMPRESSION:
        return MechanicConstraints(True, 1.0, funding)
    return MechanicConstraints(True, leverage_cap(ttr, margin), funding)


def settlement_value(side_sign: int, notional: float, entry_price: float, outcome: int) -> float:
    """PnL of carrying the position into cash settlement at ``outcome``."""
    return side_sign * notional * (outcome - entry_price)


def settle_at_resolution(
    account: AccountState,
    outcome: int,
    fund: InsuranceFund,
) -> tuple[float, InsuranceFund]:
    """Settle longs at R and shorts at 1 - R against entry.

    Returns the settlement PnL of the open position and the fund after any
    shortfall has been absorbed.
    """
    if outcome not in (0, 1):
        raise UnresolvedMarket(f"outcome {outcome!r} is not in {{0, 1}}")
    pnl = settlement_value(account.sign, account.notional, account.entry_price, outcome)
    final = account.equity + pnl
    return pnl, absorb_bad_debt(fund, -final if final < 0 else 0.0)


def circuit_breaker(sigma: float, sigma_baseline: float, k: float = 3.0) -> bool:
    """True when realized volatility exceeds ``k`` times its baseline."""
    return sigma > k * sigma_baseline
