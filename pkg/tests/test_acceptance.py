"""Acceptance checks, one test per criterion; each prints a CRITERION line."""

from __future__ import annotations

import json
import math
import random
import time

import numpy as np

from elprisk.cli import EXIT_OK, main
from elprisk.eligibility import (
    FULL_PANEL,
    PROTOCOL_PAPER,
    SPORTS_CRYPTO_HEAVY,
    GateCounts,
    adequacy_gate,
)
from elprisk.engines import PositionSpec, build_engine, simulate_position
from elprisk.funding import FundingParams, funding_aware, funding_naive, relbasis, time_weight
from elprisk.ingest import BOOK, clean_stream, reconstruction_agreement
from elprisk.ingest import book_at
from elprisk.margin import MarginParams, dynamic_leverage_cap, leverage_cap, phi, terminal_shortfall
from elprisk.provenance import without_timestamp
from elprisk.replay import GridSpec, aggregate_e2b, e2a_cells, e2b_cells, e3_cells
from elprisk.stylized import REGION_LABELS, sf1_depth_asymmetry, sf2_terminal_jump, sf4_half_spread_by_region
from elprisk.synth import DEFAULT_HALF_SPREADS, PATH_KINDS, SynthSpec, batch_specs, generate, with_spec
from conftest import TIGHT
from oracle import BruteMarket, brute_position
from verdicts import criterion, record


def _markets(specs):
    return [generate(s).to_market() for s in specs]


@criterion(1)
def test_criterion_01_static_margin_bad_debt():
    t0 = time.perf_counter()
    spec = SynthSpec(seed=101, market_id="c1", lifetime_hours=6.0, base_price=0.5, pre_collapse=0.5,
                     settle_hours=1.0, outcome=0, **TIGHT)
    m = generate(spec).to_market()
    o = simulate_position(build_engine("E0"), m, PositionSpec("long", 5, 100.0))
    elapsed = time.perf_counter() - t0
    closed_form = terminal_shortfall(100.0, 0.5, 0.5, 5)
    ok = (abs(o.bad_debt - 40.0) <= 1e-12 and abs(closed_form - 40.0) <= 1e-12
          and o.entry_price == 0.5 and elapsed < 1.0)
    record(1, ok, f"bad_debt={o.bad_debt!r} closed_form={closed_form!r} terminal={o.terminal} "
                  f"runtime={elapsed:.3f}s")


@criterion(2)
def test_criterion_02_boundary_funding():
    t0 = time.perf_counter()
    p = FundingParams()
    grid = np.linspace(0.0, 1.0, 100)
    worst = max(abs(funding_naive(mk, ix, p.c)) for mk in grid for ix in grid)
    rb = relbasis(0.05, 0.01)
    basis, ttr = 0.01, 6.0
    g = time_weight(ttr, p)
    terms = [funding_aware(ix + basis, ix, ttr, p) - p.c * g * basis for ix in (0.05, 0.02, 0.01, 0.005)]
    increasing = all(b > a for a, b in zip(terms, terms[1:]))
    elapsed = time.perf_counter() - t0
    ok = worst <= p.c and abs(rb - 4.0) <= 1e-12 and increasing and elapsed < 1.0
    record(2, ok, f"max|naive|={worst:.3g} (c={p.c}) relbasis={rb!r} boundary_terms="
                  f"{[f'{t:.3g}' for t in terms]} runtime={elapsed:.3f}s")


@criterion(3)
def test_criterion_03_schedule_endpoints():
    mp = MarginParams()
    ends = leverage_cap(0.0, mp) == 1.0 and all(leverage_cap(h, mp) == 5.0 for h in (12.0, 12.5, 24.0, 1e6))
    rng = random.Random(3)
    idx = [rng.random() for _ in range(100)]
    phi_ok = all(phi(0.0, i, mp.tau_phi) == max(i, 1.0 - i) for i in idx)
    # denominator = m_sigma * sigma + m_J * hazard * severity, driven to 1 and beyond
    sat = []
    for sigma, hazard, ttr, index in ((1.0 / mp.m_sigma, 0.0, 5.0, 0.5), (1.0, 0.0, 5.0, 0.5),
                                      (0.3, 1.0, 0.0, 0.0), (0.5, 1.0, 0.0, 0.3)):
        denom = mp.m_sigma * sigma + mp.m_J * hazard * phi(ttr, index, mp.tau_phi)
        assert denom >= 1.0
        sat.append(dynamic_leverage_cap(sigma, hazard, ttr, index, mp))
    ok = ends and phi_ok and all(c == 1.0 for c in sat)
    record(3, ok, f"cap(0)={leverage_cap(0.0, mp)} cap(>=12h)={leverage_cap(12.0, mp)} "
                  f"phi_exact={phi_ok} saturated_caps={sat}")


@criterion(4)
def test_criterion_04_halt_invariant():
    t0 = time.perf_counter()
    specs = [with_spec(s, base_price=s.pre_collapse)
             for s in batch_specs(200, 41, path_kind="flat", lifetime_hours=4.0, settle_hours=1.0,
                                 events_per_hour=30.0, **TIGHT)]
    markets = _markets(specs)
    leverages = (2, 3, 5, 10)
    cells = [c for m in markets for c in e3_cells(m, ("R0", "R3"), leverages)]
    r3_final = sum(c["final_hour_liquidation"] for c in cells if c["engine"] == "R3")
    r3_liq = sum(c["liquidation_ts"] is not None for c in cells if c["engine"] == "R3")
    r0 = [c for c in cells if c["engine"] == "R0"]
    r0_bad = sum(c["bad_debt"] > 0 for c in r0)

    # brute count from the raw book: entry at the first snapshot mid, loss beyond collateral entry / L
    entry, outcome = {}, {}
    for m in markets:
        first = next(e.timestamp_received for e in m.events if e.event_type == BOOK)
        entry[m.market_id] = book_at(m.events, first).mid()
        outcome[m.market_id] = m.outcome
    brute = literal = 0
    for m in markets:
        e, r = entry[m.market_id], outcome[m.market_id]
        for lev in leverages:
            for side in ("long", "short"):
                adverse = (r - e) * (1 if side == "long" else -1) < 0
                brute += int(adverse and abs(e - r) > e / lev)
                literal += int(abs(e - r) > 1.0 / lev)
    elapsed = time.perf_counter() - t0
    ok = r3_final == 0 and r0_bad == brute and len(r0) == 200 * 8 and elapsed < 30.0
    record(4, ok, f"R3_final_window={r3_final} (R3 liquidations elsewhere={r3_liq}) R0_bad_debt={r0_bad} "
                  f"brute(|entry-R|>entry/L, adverse side)={brute} literal(|entry-R|>1/L)={literal} "
                  f"cells={len(cells)} runtime={elapsed:.1f}s")


@criterion(5)
def test_criterion_05_oracle_equivalence():
    t0 = time.perf_counter()
    specs = batch_specs(50, 55, lifetime_hours=24.0, dip_start_hours=8.0)
    specs = [with_spec(s, **TIGHT) if i % 2 else s for i, s in enumerate(specs)]
    markets = _markets(specs)
    max_events = max(len(m.events) for m in markets)
    compared = mismatches = 0
    terminals: dict[str, int] = {}
    levels = (1, 2, 3, 5, 10)
    for k, m in enumerate(markets):
        bm = None
        for j, eid in enumerate(("E0", "E1", "E2")):
            eng = build_engine(eid)
            bm = bm or BruteMarket(m, eng.params.path_settings)
            for side in ("long", "short"):
                spec = PositionSpec(side, levels[(k + j) % len(levels)], 100.0)
                a = simulate_position(eng, m, spec)
                b = brute_position(eng, bm, spec)
                compared += 1
                terminals[a.terminal] = terminals.get(a.terminal, 0) + 1
                mismatches += int((a.terminal, a.liquidation_ts, a.final_pnl)
                                  != (b.terminal, b.liquidation_ts, b.final_pnl))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and max_events <= 5000 and elapsed < 60.0
    record(5, ok, f"positions={compared} mismatches={mismatches} terminals={terminals} "
                  f"max_events={max_events} runtime={elapsed:.1f}s")


@criterion(6)
def test_criterion_06_book_reconstruction():
    streams = []
    for i in range(4):
        spec = SynthSpec(seed=600 + i, market_id=f"c6-{i}", lifetime_hours=48.0, events_per_hour=5250.0,
                         path_kind=PATH_KINDS[i], pre_collapse=0.3, dip_start_hours=20.0)
        streams.append(clean_stream(generate(spec).events)[0])
    n_events = sum(len(s) for s in streams)
    t0 = time.perf_counter()
    matches = total = 0
    for s in streams:
        a, b = reconstruction_agreement(s)
        matches += a
        total += b
    elapsed = time.perf_counter() - t0
    ok = n_events >= 1_000_000 and total > 0 and matches == total and elapsed < 10.0
    record(6, ok, f"events={n_events} price_changes={total} agreement={matches / total:.6f} "
                  f"runtime={elapsed:.2f}s")


@criterion(7)
def test_criterion_07_stylized_recovery():
    boundary = _markets(batch_specs(100, 71, path_kind="flat", base_price=0.05, pre_collapse=None,
                                    lifetime_hours=24.0))
    sf1 = sf1_depth_asymmetry(boundary)
    collapsing = _markets(batch_specs(100, 72, path_kind="flat", base_price=0.5, pre_collapse=0.5, outcome=1,
                                      lifetime_hours=8.0))
    sf2 = sf2_terminal_jump(collapsing)
    centers = (0.05, 0.2, 0.5, 0.8, 0.95)
    by_region = []
    for i in range(100):
        c = centers[i % 5]
        by_region.append(SynthSpec(seed=7000 + i, market_id=f"c7-{i}", lifetime_hours=12.0,
                                   base_price=c, pre_collapse=c, outcome=None))
    sf4 = sf4_half_spread_by_region(_markets(by_region))
    spreads = {lab: sf4[lab]["median"] for lab in REGION_LABELS}
    rel = {lab: abs(spreads[lab] - t) / t for lab, t in zip(REGION_LABELS, DEFAULT_HALF_SPREADS)}
    ok = (abs(sf1["pooled"] - 1.7) <= 0.05 and sf2["pooled"] == 0.5 and sf2["dark"] == 0
          and len(sf1["per_market"]) == 100 and max(rel.values()) <= 0.10)
    record(7, ok, f"SF1={sf1['pooled']:.6f} (target 1.7) SF2={sf2['pooled']!r} (target 0.5) "
                  f"SF4_max_rel_err={max(rel.values()):.4f}")


@criterion(8)
def test_criterion_08_preemption():
    # dip paths on an even price grid, shallow dips early and late in the lifetime
    def dips(depth):
        return [
            generate(SynthSpec(seed=800 + 10 * k + i, market_id=f"dip-{k}-{i}", lifetime_hours=30.0,
                               path_kind="dip_recover", base_price=level / 10, dip_start_hours=start,
                               dip_depth=depth, dip_hours=1.0, outcome=i % 2, **TIGHT)).to_market()
            for k, start in enumerate((10.0, 22.0)) for i, level in enumerate(range(1, 10))
        ]

    def breaches(markets):
        cells = [c for m in markets for c in e2a_cells(m, ("E0", "E2"), (2, 3, 5, 10))]
        return {e: sum(c["breached"] for c in cells if c["engine"] == e) for e in ("E0", "E2")}, len(cells) // 2

    dip_counts, n_dip = breaches(dips(0.02))
    deep_counts, _ = breaches(dips(0.05))
    collapse = _markets(batch_specs(20, 82, path_kind="flat", lifetime_hours=30.0, **TIGHT))
    grid = GridSpec(leverages=(2, 3, 5, 10), notionals=(100.0,), entry_offsets_hours=(24.0, 6.0))
    rep = aggregate_e2b([c for m in collapse for c in e2b_cells(m, ("E0", "E2"), grid)])
    dd = {e: rep["drawdown"][e]["pooled"] for e in ("E0", "E2")}
    ok = dip_counts["E2"] > dip_counts["E0"] and dd["E2"] <= dd["E0"]
    record(8, ok, f"dip cells per engine={n_dip} liquidated E0={dip_counts['E0']} E2={dip_counts['E2']}; "
                  f"collapse drawdown E0={dd['E0']:.2f} E2={dd['E2']:.2f}; "
                  f"(deep 0.05 dips, informational: E0={deep_counts['E0']} E2={deep_counts['E2']})")


def _pipeline(d):
    ev = d / "m.jsonl"
    outs = {k: d / f"{k}.json" for k in ("e2a", "e2b", "e3", "floors")}
    codes = [
        main(["synth", "--seed", "9", "--n-markets", "6", "--out", str(ev)]),
        main(["e2a", "--events", str(ev), "--out", str(outs["e2a"])]),
        main(["e2b", "--events", str(ev), "--out", str(outs["e2b"])]),
        main(["e3", "--events", str(ev), "--out", str(outs["e3"])]),
        main(["floors", "--e2a", str(outs["e2a"]), "--e2b", str(outs["e2b"]), "--e3", str(outs["e3"]),
              "--out", str(outs["floors"])]),
    ]
    docs = {k: json.dumps(without_timestamp(json.loads(p.read_text())), sort_keys=True) for k, p in outs.items()}
    docs["events"] = ev.read_text()
    return codes, docs


@criterion(9)
def test_criterion_09_determinism(tmp_path):
    codes_a, first = _pipeline(tmp_path)
    codes_b, second = _pipeline(tmp_path)
    same = all(first[k] == second[k] for k in first)
    ev = tmp_path / "m.jsonl"
    pnl = []
    for seed in ("1", "2"):
        out = tmp_path / f"e2c-{seed}.json"
        assert main(["e2c", "--events", str(ev), "--seed", seed, "--traders", "60", "--out", str(out)]) == EXIT_OK
        pnl.append(json.loads(out.read_text())["report"]["engines"])
    differ = any(pnl[0][e]["pnl"] != pnl[1][e]["pnl"] for e in pnl[0])
    ok = set(codes_a + codes_b) == {EXIT_OK} and same and differ
    record(9, ok, f"exit_codes={codes_a}+{codes_b} identical_payloads={same} "
                  f"artifacts={sorted(first)} e2c_seeds_differ={differ}")


@criterion(10)
def test_criterion_10_gate():
    published = adequacy_gate(GateCounts(politics=408, sports=6794, crypto=1518))
    checks = {
        "published_branch": published.branch == FULL_PANEL,
        "published_trigger": published.sports_trigger,
        "published_share": round(published.sports_share, 3) == 0.779,
        "all_floors_exact": adequacy_gate(GateCounts(20, 20, 50, 10)).branch == FULL_PANEL,
        "total_short": adequacy_gate(GateCounts(20, 20, 50, 9)).branch == SPORTS_CRYPTO_HEAVY,
        "politics_short": adequacy_gate(GateCounts(19, 20, 50, 100)).branch == SPORTS_CRYPTO_HEAVY,
        "crypto_short": adequacy_gate(GateCounts(20, 20, 49, 100)).branch == PROTOCOL_PAPER,
        "sports_short": adequacy_gate(GateCounts(20, 19, 50, 100)).branch == PROTOCOL_PAPER,
        "nothing": adequacy_gate(GateCounts()).branch == PROTOCOL_PAPER,
        "share_at_trigger": not adequacy_gate(GateCounts(30, 70, 0)).sports_trigger,
        "share_above_trigger": adequacy_gate(GateCounts(29, 71, 0)).sports_trigger,
        "failure_sample_10": adequacy_gate(GateCounts(failure_sample=10)).failure_sample_informative,
        "failure_sample_9": not adequacy_gate(GateCounts(failure_sample=9)).failure_sample_informative,
    }
    failed = [k for k, v in checks.items() if not v]
    record(10, not failed, f"branch={published.branch} share={published.sports_share:.4f} "
                           f"trigger={published.sports_trigger} edge_cases={len(checks) - 3} failed={failed}")


@criterion(11)
def test_criterion_11_phi_invariance():
    markets = _markets(batch_specs(12, 111, lifetime_hours=30.0))
    grid = GridSpec(leverages=(2, 5, 10), notionals=(10.0, 100.0), entry_offsets_hours=(24.0, 6.0))
    cells = [c for m in markets for c in e2b_cells(m, grid=grid)]
    reps = {phi_fund: aggregate_e2b(cells, phi_fund) for phi_fund in (0.01, 0.02, 0.05, 0.10)}
    spread = {}
    for eid in ("E1", "E2"):
        vals = [r["relative_drawdown_vs_E0"][eid] for r in reps.values()]
        assert all(math.isfinite(v) for v in vals)
        spread[eid] = max(vals) - min(vals)
    base = reps[0.05]["drawdown"]["E0"]["pooled"]
    ok = base > 0 and max(spread.values()) <= 1e-9
    record(11, ok, f"E0_drawdown={base:.3f} relative_delta(phi=0.05)="
                   f"{ {e: round(reps[0.05]['relative_drawdown_vs_E0'][e], 6) for e in spread} } "
                   f"max_spread_across_phi={max(spread.values()):.3g}")
