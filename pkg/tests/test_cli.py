from __future__ import annotations

import json

import pytest

from elprisk.cli import EXIT_OK, EXIT_PREFLIGHT, EXIT_STOPPED, EXIT_USAGE, main
from elprisk.provenance import without_timestamp


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    ev = d / "m.jsonl"
    assert main(["synth", "--seed", "7", "--n-markets", "4", "--out", str(ev)]) == EXIT_OK
    return ev


def _read(path):
    return json.loads(path.read_text())


def test_synth_outputs(corpus):
    for suffix in (".resolutions.jsonl", ".metadata.jsonl", ".news.jsonl", ".synth.json"):
        assert corpus.with_name(corpus.stem + suffix).exists()
    doc = _read(corpus.with_name(corpus.stem + ".synth.json"))
    assert doc["report"]["markets"] == 4
    assert doc["provenance"]["seeds"] == {"synth": 7}


def test_sf_pipeline(corpus, tmp_path):
    out = tmp_path / "sf.json"
    assert main(["sf", "--events", str(corpus), "--out", str(out)]) == EXIT_OK
    doc = _read(out)
    assert "sf1" in doc["report"] and "e1" in doc["report"]
    prov = doc["provenance"]
    assert set(prov) >= {"code_version", "dependencies", "seeds", "inputs", "params", "timestamp_utc"}
    assert str(corpus) in prov["inputs"]


def test_bad_flag():
    assert main(["e2a", "--no-such-flag"]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE
    assert main(["e2a", "--check-every", "0"]) == EXIT_USAGE


def test_missing_input(tmp_path):
    assert main(["e2a", "--events", str(tmp_path / "absent.jsonl")]) == EXIT_PREFLIGHT


def test_config_validation(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"funding": {"c": 0.5}}}))
    assert main(["e2a", "--events", str(corpus), "--config", str(cfg)]) == EXIT_USAGE
    cfg.write_text(json.dumps({"params": {"funding": {"nope": 1}}}))
    assert main(["e2a", "--events", str(corpus), "--config", str(cfg)]) == EXIT_USAGE
    cfg.write_text("[1, 2]")
    assert main(["e2a", "--events", str(corpus), "--config", str(cfg)]) == EXIT_USAGE


def test_stop_and_resume(corpus, tmp_path):
    full = tmp_path / "full.json"
    assert main(["e2a", "--events", str(corpus), "--out", str(full)]) == EXIT_OK

    stop = tmp_path / "STOP"
    stop.write_text("")
    part_out = tmp_path / "part.json"
    code = main(["e2a", "--events", str(corpus), "--out", str(part_out), "--stop-file", str(stop),
                 "--check-every", "1"])
    assert code == EXIT_STOPPED
    state_path = tmp_path / "part.json.partial.json"
    state = _read(state_path)
    assert state["command"] == "e2a" and state["reason"] == "stop_file"
    assert len(state["completed_markets"]) == 1
    assert not part_out.exists()

    stop.unlink()
    resumed = tmp_path / "resumed.json"
    assert main(["e2a", "--events", str(corpus), "--out", str(resumed), "--resume", str(state_path)]) == EXIT_OK
    assert _read(resumed)["report"] == _read(full)["report"]


def test_reproducible_payload(corpus, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["e3", "--events", str(corpus), "--out", str(out)]) == EXIT_OK
    assert without_timestamp(_read(a)) == without_timestamp(_read(b))


def test_e2c_needs_seed(corpus):
    assert main(["e2c", "--events", str(corpus)]) == EXIT_USAGE


def test_gate(tmp_path):
    out = tmp_path / "gate.json"
    assert main(["gate", "--politics", "408", "--sports", "6794", "--crypto", "1518", "--out", str(out)]) == EXIT_OK
    rep = _read(out)["report"]
    assert rep["branch"] == "full_panel" and rep["sports_trigger"]


def test_input_digest_ignores_run_timestamp(tmp_path):
    from elprisk.provenance import input_digest

    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.jsonl"
    a.write_text(json.dumps({"report": {"x": 1}, "provenance": {"timestamp_utc": "2026-01-01T00:00:00+00:00"}}))
    b.write_text(json.dumps({"report": {"x": 1}, "provenance": {"timestamp_utc": "2026-02-02T00:00:00+00:00"}}))
    assert input_digest(a) == input_digest(b)
    b.write_text(json.dumps({"report": {"x": 2}, "provenance": {"timestamp_utc": "2026-02-02T00:00:00+00:00"}}))
    assert input_digest(a) != input_digest(b)
    c.write_text('{"provenance": {}}\n')
    from elprisk.provenance import file_sha256
    assert input_digest(c) == file_sha256(c)
