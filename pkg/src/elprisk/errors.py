"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class ElpriskError(Exception):
    """Base class for all package errors."""


# ingest
class MalformedRecord(ElpriskError):
    pass


class UnknownEventType(ElpriskError):
    pass


class OutOfRangePrice(ElpriskError):
    pass


class StaleEvent(ElpriskError):
    pass


class NoSnapshotBefore(ElpriskError):
    def __init__(self, t: int):
        super().__init__(f"no book snapshot at or before t={t}")
        self.t = t


# estimators / index
class MissingValue(ElpriskError):
    """A component could not be computed and the caller must fall back."""


class MissingMid(ElpriskError):
    pass


class NonMonotoneTimestamps(ElpriskError):
    pass


class EmptyTrainingSet(ElpriskError):
    pass


class NoComponents(ElpriskError):
    pass


# margin / funding / liquidation
class NegativeNotional(ElpriskError):
    pass


class DegenerateIndex(ElpriskError):
    pass


class ClosedAccount(ElpriskError):
    pass


class UnresolvedMarket(ElpriskError):
    pass


# engines / replay
class InconsistentConfig(ElpriskError):
    pass


class NoEntryQuote(ElpriskError):
    pass


class NoResolvedMarkets(ElpriskError):
    pass


class MissingMetric(ElpriskError):
    pass


class UnknownAxis(ElpriskError):
    pass


class OutOfRange(ElpriskError):
    pass


# eligibility
class MissingDimension(ElpriskError):
    pass


class BadWeights(ElpriskError):
    pass


# synth
class InvalidSpec(ElpriskError):
    pass
