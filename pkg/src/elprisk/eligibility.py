"""Listing eligibility: quantitative suitability score, governance flags, adequacy gate and sampling."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import BadWeights, MissingDimension

DIMENSIONS = (
    "liquidity_adequacy",
    "spread_regime",
    "depth_stability",
    "jump_containment",
    "stale_quote_rate",
    "resolution_timing",
)
DEFAULT_WEIGHTS = {d: 1.0 / len(DIMENSIONS) for d in DIMENSIONS}
LISTING_THRESHOLD = 0.60
DEFAULT_SEED = 20260505
GATE_CLASSES = ("politics", "sports", "crypto")


# ---------------------------------------------------------------- suitability


def percentile_map(values: Mapping[str, float], higher_is_better: bool = True) -> dict[str, float]:
    """Midpoint-rank empirical CDF of each value within the group; ties share a rank."""
    n = len(values)
    if n == 0:
        return {}
    ordered = list(values.values())
    out = {}
    for key, v in values.items():
        worse = sum(1 for x in ordered if (x < v if higher_is_better else x > v))
        equal = sum(1 for x in ordered if x == v)
        out[key] = (worse + 0.5 * equal) / n
    return out


def class_percentiles(
    raw: Mapping[str, Mapping[str, float]],
    classes: Mapping[str, str],
    lower_is_better: Sequence[str] = ("spread_regime", "stale_quote_rate"),
) -> dict[str, dict[str, float]]:
    """Map raw per-market features to [0, 1] by percentile within each market's event class."""
    by_class: dict[str, list[str]] = {}
    for mid in raw:
        by_class.setdefault(classes.get(mid, "other"), []).append(mid)
    out: dict[str, dict[str, float]] = {mid: {} for mid in raw}
    for members in by_class.values():
        for dim in DIMENSIONS:
            vals = {m: raw[m][dim] for m in members if dim in raw[m]}
            for m, p in percentile_map(vals, dim not in lower_is_better).items():
                out[m][dim] = p
    return out


def _check_weights(weights: Mapping[str, float]) -> None:
    if set(weights) != set(DIMENSIONS):
        raise BadWeights(f"weights must cover exactly {DIMENSIONS}")
    if any(w < 0 or not math.isfinite(w) for w in weights.values()):
        raise BadWeights("weights must be finite and non-negative")
    if abs(sum(weights.values()) - 1.0) > 1e-9:
        raise BadWeights("weights must sum to 1")


def suitability_score(inputs: Mapping[str, float], weights: Mapping[str, float] | None = None) -> float:
    """Weighted geometric mean of the six mapped dimensions."""
    weights = DEFAULT_WEIGHTS if weights is None else weights
    _check_weights(weights)
    missing = [d for d in DIMENSIONS if d not in inputs]
    if missing:
        raise MissingDimension(", ".join(missing))
    log_sum = 0.0
    for d in DIMENSIONS:
        v, w = inputs[d], weights[d]
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{d}={v} outside [0, 1]")
        if w == 0:
            continue
        if v == 0:
            return 0.0
        log_sum += w * math.log(v)
    return math.exp(log_sum)


# ---------------------------------------------------------------- governance overlay


class Grade(str, Enum):
    NONE = "none"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


NO_LIST_CATEGORIES = frozenset({
    "individual_athlete_insider",
    "single_actor_controlled",
    "self_referential",
    "ambiguous_resolution_source",
})


@dataclass(frozen=True)
class OverlayFlags:
    insider_exposure: Grade = Grade.NONE
    resolution_ambiguity: Grade = Grade.NONE
    manipulation_surface: Grade = Grade.NONE
    concentration: Grade = Grade.NONE
    categories: frozenset[str] = field(default_factory=frozenset)

    @property
    def default_no_list(self) -> bool:
        return bool(self.categories & NO_LIST_CATEGORIES)

    def to_dict(self) -> dict:
        return {
            "insider_exposure": self.insider_exposure.value,
            "resolution_ambiguity": self.resolution_ambiguity.value,
            "manipulation_surface": self.manipulation_surface.value,
            "concentration": self.concentration.value,
            "default_no_list": self.default_no_list,
            "categories": sorted(self.categories),
        }


@dataclass(frozen=True)
class ListingDecision:
    eligible: bool
    reason: str | None = None


def listing_decision(score: float, flags: OverlayFlags = OverlayFlags(),
                     threshold: float = LISTING_THRESHOLD) -> ListingDecision:
    """Eligible iff the score clears the threshold and no default no-list category applies."""
    if flags.default_no_list:
        return ListingDecision(False, "governance")
    if score < threshold:
        return ListingDecision(False, "quantitative")
    return ListingDecision(True)


# ---------------------------------------------------------------- adequacy gate


@dataclass(frozen=True)
class GateFloors:
    politics: int = 20
    sports: int = 20
    crypto: int = 50
    total: int = 100
    sports_share_trigger: float = 0.70
    failure_sample_min: int = 10


@dataclass(frozen=True)
class GateCounts:
    politics: int = 0
    sports: int = 0
    crypto: int = 0
    other: int = 0
    gamma_miss_rate: float = 0.0
    resolution_join_rate: float = 1.0
    failure_sample: int = 0

    def __post_init__(self) -> None:
        if min(self.politics, self.sports, self.crypto, self.other, self.failure_sample) < 0:
            raise ValueError("counts must be non-negative")
        for r in (self.gamma_miss_rate, self.resolution_join_rate):
            if not 0.0 <= r <= 1.0:
                raise ValueError("rates must lie in [0, 1]")

    @property
    def total(self) -> int:
        return self.politics + self.sports + self.crypto + self.other

    @property
    def sports_share(self) -> float:
        three = self.politics + self.sports + self.crypto
        return self.sports / three if three else 0.0


FULL_PANEL = "full_panel"
SPORTS_CRYPTO_HEAVY = "sports_crypto_heavy"
PROTOCOL_PAPER = "protocol_paper"


@dataclass(frozen=True)
class GateResult:
    branch: str
    class_pass: dict[str, bool]
    total_pass: bool
    sports_share: float
    sports_trigger: bool
    failure_sample_informative: bool

    def to_dict(self) -> dict:
        return {
            "branch": self.branch, "class_pass": self.class_pass, "total_pass": self.total_pass,
            "sports_share": self.sports_share, "sports_trigger": self.sports_trigger,
            "failure_sample_informative": self.failure_sample_informative,
        }


def adequacy_gate(counts: GateCounts, floors: GateFloors = GateFloors()) -> GateResult:
    passes = {c: getattr(counts, c) >= getattr(floors, c) for c in GATE_CLASSES}
    total_ok = counts.total >= floors.total
    if all(passes.values()) and total_ok:
        branch = FULL_PANEL
    elif passes["sports"] and passes["crypto"]:
        branch = SPORTS_CRYPTO_HEAVY
    else:
        branch = PROTOCOL_PAPER
    share = counts.sports_share
    return GateResult(branch, passes, total_ok, share, share > floors.sports_share_trigger,
                      counts.failure_sample >= floors.failure_sample_min)


# ---------------------------------------------------------------- sampling


def stratified_sample(first_seen_day: Mapping[str, str], per_day_n: int, seed: int = DEFAULT_SEED) -> list[str]:
    """Up to ``per_day_n`` ids per day without replacement, interleaved round-robin by day."""
    if per_day_n < 0:
        raise ValueError("per_day_n must be non-negative")
    rng = random.Random(seed)
    days: dict[str, list[str]] = {}
    for mid, day in first_seen_day.items():
        days.setdefault(day, []).append(mid)
    picks = []
    for day in sorted(days):
        ids = sorted(days[day])
        picks.append(rng.sample(ids, min(per_day_n, len(ids))))
    out = []
    for k in range(max((len(p) for p in picks), default=0)):
        for p in picks:
            if k < len(p):
                out.append(p[k])
    return out
