"""Small builders for hand-made event streams."""

from __future__ import annotations

from elprisk.ingest import (
    BOOK,
    PRICE_CHANGE,
    TRADE,
    BookPayload,
    OrderBookState,
    PriceChangePayload,
    RawEvent,
    TradePayload,
    clean_stream,
)


def snap(ts, bids=(), asks=(), seq=0, market="m"):
    return RawEvent(ts, ts, BOOK, market, "a", seq, BookPayload(tuple(bids), tuple(asks)))


def delta(ts, changes, seq=0, market="m", best_bid=None, best_ask=None):
    return RawEvent(ts, ts, PRICE_CHANGE, market, "a", seq, PriceChangePayload(tuple(changes), best_bid, best_ask))


def trade(ts, price, size, seq=0, market="m"):
    return RawEvent(ts, ts, TRADE, market, "a", seq, TradePayload(price, size, "buy"))


def clean(events):
    return clean_stream(events)[0]


def book(bids=(), asks=()):
    return OrderBookState(dict(bids), dict(asks))
