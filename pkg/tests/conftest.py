from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from elprisk.synth import SynthSpec, generate  # noqa: E402

TIGHT = dict(half_spreads=(0.005,) * 5, level_size=200.0)


@pytest.fixture(scope="session")
def flat_market():
    """Flat 0.5 path resolving YES with tight quotes."""
    return generate(SynthSpec(seed=3, market_id="flat", pre_collapse=0.5, outcome=1, **TIGHT)).to_market()


@pytest.fixture(scope="session")
def collapse_market():
    """Flat 0.5 path that resolves NO with tight quotes."""
    return generate(SynthSpec(seed=4, market_id="collapse", pre_collapse=0.5, outcome=0, **TIGHT)).to_market()


@pytest.fixture(scope="session")
def small_market():
    """Short default-spread market with a mean-reverting path."""
    spec = SynthSpec(seed=11, market_id="small", lifetime_hours=12, path_kind="mean_reverting",
                     pre_collapse=0.4, outcome=0)
    return generate(spec).to_market()


def pytest_terminal_summary(terminalreporter):
    from verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
