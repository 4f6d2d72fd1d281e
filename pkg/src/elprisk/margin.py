"""Jump-aware tiered margin and the time-to-resolution leverage caps."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NegativeNotional
from .estimators import VolEstimate


@dataclass(frozen=True)
class MarginParams:
    m_sigma: float = 3.0
    m_J: float = 0.5
    mu: float = 0.5
    tau_phi: float = 12.0
    H_M: float = 1.0
    m_D: float = 0.5
    f_D: float = 0.1
    L_cap: float = 5.0
    ramp_hours: float = 12.0

    def __post_init__(self) -> None:
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.L_cap < 1.0:
            raise ValueError("L_cap must be >= 1")
        for name in ("m_sigma", "m_J", "tau_phi", "H_M", "m_D", "f_D", "ramp_hours"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class MarginQuote:
    vol_component: float
    jump_component: float
    size_addon: float
    initial: float
    maintenance: float


def phi(ttr: float, index: float, tau_phi: float = 12.0) -> float:
    """Terminal-jump severity: worst-case move size damped by time to resolution."""
    return max(index, 1.0 - index) * math.exp(-max(ttr, 0.0) / tau_phi)


def _sigma(sigma: VolEstimate | float) -> float:
    return sigma.sigma if isinstance(sigma, VolEstimate) else float(sigma)


def initial_margin(
    x: float,
    sigma: VolEstimate | float,
    pi_jump: float,
    ttr: float,
    index: float,
    depth: float,
    p: MarginParams = MarginParams(),
) -> MarginQuote:
    if x < 0:
        raise NegativeNotional(f"position size {x} is negative")
    vol = p.m_sigma * _sigma(sigma) * math.sqrt(p.H_M) * x
    jump = p.m_J * pi_jump * x * phi(ttr, index, p.tau_phi)
    addon = p.m_D * max(0.0, x - p.f_D * depth)
    initial = vol + jump + addon
    return MarginQuote(vol, jump, addon, initial, p.mu * initial)


def maintenance_margin(q: MarginQuote, mu: float = 0.5) -> float:
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    return mu * q.initial


def static_margin(x: float, entry_price: float, leverage: float) -> float:
    """Collateral of a position opened at ``leverage``: x * entry / L."""
    if x < 0:
        raise NegativeNotional(f"position size {x} is negative")
    return x * entry_price / leverage


def leverage_cap(ttr: float, p: MarginParams = MarginParams()) -> float:
    """Linear ramp from 1 at resolution to ``L_cap`` at ``ramp_hours`` out."""
    frac = min(max(ttr, 0.0) / p.ramp_hours, 1.0)
    return min(p.L_cap, 1.0 + (p.L_cap - 1.0) * frac)


def dynamic_leverage_cap(
    sigma: VolEstimate | float,
    pi_jump: float,
    ttr: float,
    index: float,
    p: MarginParams = MarginParams(),
) -> float:
    denom = p.m_sigma * _sigma(sigma) + p.m_J * pi_jump * phi(ttr, index, p.tau_phi)
    if denom <= 0:
        return p.L_cap
    # a cap below 1 would force deleveraging of unlevered positions
    return max(1.0, min(p.L_cap, 1.0 / denom))


def terminal_shortfall(x: float, price_before: float, entry_price: float, leverage: float) -> float:
    """Loss beyond posted collateral when a long at ``entry`` collapses to zero.

    Equals ``x * (p_before - p_entry / L)``; positive means bad debt.
    """
    return x * (price_before - entry_price / leverage)
