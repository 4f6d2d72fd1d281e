from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from elprisk.engines import (
    HALT_CLOSED,
    LIQUIDATED,
    SETTLED,
    SURVIVED,
    PositionOutcome,
    PositionSpec,
    build_engine,
    build_mechanic_engine,
    simulate_market,
    simulate_position,
)
from elprisk.errors import InconsistentConfig
from elprisk.ingest import MS_PER_HOUR
from elprisk.resolution import MechanicId
from elprisk.synth import PATH_KINDS, SynthSpec, generate
from oracle import BruteMarket, brute_position


class TestBuild:
    def test_e0(self):
        e = build_engine("E0")
        assert e.funding_mode == "naive" and e.index_source == "reference_direct"
        assert e.margin_mode == "static_vol" and e.leverage_mode == "constant"
        assert e.resolution_mechanic is MechanicId.R0

    def test_e1(self):
        e = build_engine("E1")
        assert (e.margin_mode, e.funding_mode, e.leverage_mode) == ("jump_aware", "naive", "compressed")

    def test_e2(self):
        e = build_engine("E2")
        assert e.resolution_mechanic is MechanicId.R3 and e.index_source == "composite"

    def test_conflict(self):
        with pytest.raises(InconsistentConfig):
            build_engine("E1", funding_mode="aware")
        with pytest.raises(InconsistentConfig):
            build_engine("E9")

    def test_matching_override_ok(self):
        assert build_engine("E2", funding_mode="aware").funding_mode == "aware"

    def test_mechanics(self):
        assert build_mechanic_engine("R2").funding_mode == "aware"
        assert build_mechanic_engine("R1").funding_mode == "naive"
        assert build_mechanic_engine("R0").resolution_mechanic is MechanicId.R0


def test_spec_validation():
    with pytest.raises(ValueError):
        PositionSpec("long", 0.5)
    with pytest.raises(ValueError):
        PositionSpec("up", 2)
    with pytest.raises(ValueError):
        PositionOutcome(SURVIVED, 0.0, None, 1.0, 0.0, 0, 0.5, 0.5)


class TestSimulate:
    def test_flat_winner(self, flat_market):
        o = simulate_position(build_engine("E0"), flat_market, PositionSpec("long", 1, 100.0))
        assert o.terminal == SURVIVED
        assert o.entry_price == pytest.approx(0.5)
        assert o.final_pnl == pytest.approx(100 * 0.5, abs=1e-9)

    def test_flat_short_winner(self, collapse_market):
        o = simulate_position(build_engine("E0"), collapse_market, PositionSpec("short", 1, 100.0))
        assert o.terminal == SURVIVED and o.final_pnl == pytest.approx(50.0, abs=1e-9)

    def test_collapse_bad_debt(self, collapse_market):
        o = simulate_position(build_engine("E0"), collapse_market, PositionSpec("long", 5, 100.0))
        assert o.terminal == SETTLED
        assert o.collateral == pytest.approx(10.0)
        assert o.bad_debt == pytest.approx(40.0, abs=1e-12)
        assert o.final_pnl == pytest.approx(-50.0, abs=1e-12)

    def test_e2_halt_closed(self, collapse_market):
        o = simulate_position(build_engine("E2"), collapse_market, PositionSpec("long", 5, 100.0))
        assert o.terminal == HALT_CLOSED
        assert o.bad_debt == 0
        assert o.close_ts == collapse_market.tau - MS_PER_HOUR
        assert o.final_pnl == pytest.approx(0.0, abs=1e-9)

    def test_determinism(self, small_market):
        spec = PositionSpec("short", 3, 50.0)
        for eid in ("E0", "E1", "E2"):
            e = build_engine(eid)
            assert simulate_position(e, small_market, spec) == simulate_position(e, small_market, spec)

    def test_simulate_market(self, small_market):
        e = build_engine("E0")
        assert simulate_market(e, small_market, []) == []
        specs = [PositionSpec(s, lev, 10.0) for s in ("long", "short") for lev in (1, 2, 3, 5, 10)]
        out = simulate_market(e, small_market, specs)
        assert len(out) == 10
        assert out == [simulate_position(e, small_market, s) for s in specs]

    def test_unresolved_market_survives_open(self):
        m = generate(SynthSpec(seed=5, lifetime_hours=6, outcome=None)).to_market()
        o = simulate_position(build_engine("E0"), m, PositionSpec("long", 1, 10.0))
        assert o.terminal in (SURVIVED, LIQUIDATED)
        assert o.bad_debt == 0


def _market(seed, kind, cls="politics"):
    spec = SynthSpec(seed=seed, market_id=f"h{seed}", event_class=cls, lifetime_hours=12, path_kind=kind,
                     base_price=0.3 + 0.4 * ((seed % 7) / 6), pre_collapse=0.2 + 0.6 * ((seed % 5) / 4),
                     dip_start_hours=4, dip_depth=0.1, outcome=seed % 2)
    return generate(spec).to_market()


markets = st.builds(_market, st.integers(0, 10_000), st.sampled_from(PATH_KINDS))


@settings(max_examples=12)
@given(markets)
def test_e0_unlevered_long_never_bad_debt(m):
    o = simulate_position(build_engine("E0"), m, PositionSpec("long", 1, 100.0))
    assert o.bad_debt == 0


@settings(max_examples=12)
@given(markets, st.sampled_from(["long", "short"]))
def test_liquidation_time_monotone_in_leverage(m, side):
    e = build_engine("E0")
    times = []
    for lev in (1, 2, 3, 5, 10):
        o = simulate_position(e, m, PositionSpec(side, lev, 100.0))
        times.append(float("inf") if o.liquidation_ts is None else o.liquidation_ts)
    assert all(a >= b for a, b in zip(times, times[1:]))


@settings(max_examples=6)
@given(st.integers(0, 10_000), st.sampled_from(PATH_KINDS), st.sampled_from(["politics", "sports"]))
def test_oracle_equivalence(seed, kind, cls):
    m = _market(seed, kind, cls)
    bm = None
    for eid in ("E0", "E1", "E2"):
        e = build_engine(eid)
        bm = bm or BruteMarket(m, e.params.path_settings)
        for side in ("long", "short"):
            spec = PositionSpec(side, (1, 3, 10)[seed % 3], 100.0)
            a = simulate_position(e, m, spec)
            b = brute_position(e, bm, spec)
            assert (a.terminal, a.liquidation_ts, a.final_pnl) == (b.terminal, b.liquidation_ts, b.final_pnl)
