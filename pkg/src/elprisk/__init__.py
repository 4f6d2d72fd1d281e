"""Risk-engine replay for event-linked perpetuals on binary prediction markets."""

from __future__ import annotations

from .engines import (
    EngineConfig,
    EngineParams,
    PositionOutcome,
    PositionSpec,
    build_engine,
    build_mechanic_engine,
    simulate_market,
    simulate_position,
)
from .marketpath import MarketData, load_markets
from .synth import SynthSpec, generate

__all__ = [
    "EngineConfig",
    "EngineParams",
    "MarketData",
    "PositionOutcome",
    "PositionSpec",
    "SynthSpec",
    "build_engine",
    "build_mechanic_engine",
    "generate",
    "load_markets",
    "simulate_market",
    "simulate_position",
]
