from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobtransfer.book import (
    Order,
    OrderBook,
    OrderKind,
    OrderRejected,
    Side,
    cancel_order,
    mid_price,
    submit_order,
)
from reference import random_stream, replay_both


def limit(oid, side, price, qty, agent=1):
    return Order(oid, agent, Side(side), OrderKind.LIMIT, qty, price)


def market(oid, side, qty, agent=1):
    return Order(oid, agent, Side(side), OrderKind.MARKET, qty)


def test_market_buy_walks_fifo_level():
    book = OrderBook()
    submit_order(book, limit(1, "sell", 10070, 100, agent=7))
    submit_order(book, limit(2, "sell", 10070, 100, agent=8))
    trades = submit_order(book, market(3, "buy", 150))
    assert [(t.resting_order_id, t.quantity, t.price) for t in trades] == [(1, 100, 10070), (2, 50, 10070)]
    assert book.get(2).remaining == 50
    assert 1 not in book
    assert book.ask_volume == 50


def test_limit_on_empty_book_rests():
    book = OrderBook()
    assert submit_order(book, limit(1, "buy", 10050, 50)) == []
    assert book.best_bid == 10050 and book.best_ask is None
    assert len(book) == 1


def test_crossing_limit_executes_at_resting_price():
    book = OrderBook()
    submit_order(book, limit(1, "buy", 10050, 100))
    submit_order(book, limit(2, "sell", 10070, 100))
    trades = submit_order(book, limit(3, "sell", 10040, 30))
    assert [(t.price, t.quantity) for t in trades] == [(10050, 30)]
    assert 3 not in book
    assert book.bid_volume == 70


def test_market_remainder_discarded():
    book = OrderBook()
    submit_order(book, limit(1, "sell", 101, 5))
    trades = submit_order(book, market(2, "buy", 9))
    assert sum(t.quantity for t in trades) == 5
    assert len(book) == 0


def test_self_trade_allowed():
    book = OrderBook()
    submit_order(book, limit(1, "sell", 101, 5, agent=3))
    trades = submit_order(book, market(2, "buy", 2, agent=3))
    assert trades[0].aggressor_agent_id == trades[0].resting_agent_id == 3


def test_cancel_semantics():
    book = OrderBook()
    submit_order(book, limit(1, "buy", 100, 1))
    assert cancel_order(book, 1)
    assert len(book) == 0 and book.best_bid is None
    assert not cancel_order(book, 99)

    submit_order(book, limit(2, "buy", 100, 1))
    submit_order(book, limit(3, "buy", 100, 4))
    assert cancel_order(book, 2)
    price, orders = book.levels(Side.BUY)[0]
    assert price == 100 and [o.order_id for o in orders] == [3]


def test_mid_price_exact():
    book = OrderBook()
    assert mid_price(book) is None
    submit_order(book, limit(1, "buy", 10050, 1))
    assert mid_price(book) is None
    submit_order(book, limit(2, "sell", 10070, 1))
    assert mid_price(book) == 10060
    book = OrderBook()
    submit_order(book, limit(1, "buy", 100, 1))
    submit_order(book, limit(2, "sell", 101, 1))
    assert mid_price(book) == Fraction(201, 2)


@pytest.mark.parametrize(
    "order",
    [
        Order(1, 1, Side.BUY, OrderKind.LIMIT, 0, 100),
        Order(1, 1, Side.BUY, OrderKind.LIMIT, -3, 100),
        Order(1, 1, Side.BUY, OrderKind.LIMIT, 5, None),
        Order(1, 1, Side.BUY, OrderKind.LIMIT, 5, 0),
        Order(1, 1, Side.BUY, OrderKind.MARKET, 5, 100),
    ],
)
def test_malformed_rejected(order):
    with pytest.raises(OrderRejected):
        OrderBook().submit(order)


def test_duplicate_id_rejected():
    book = OrderBook()
    book.submit(limit(1, "buy", 100, 1))
    with pytest.raises(OrderRejected):
        book.submit(limit(1, "sell", 200, 1))


def test_off_tick_rejected():
    with pytest.raises(OrderRejected):
        OrderBook(tick_size=5).submit(limit(1, "buy", 101, 1))


def test_oracle_random_streams():
    rng = np.random.default_rng(11)
    for _ in range(50):
        got, want = replay_both(random_stream(rng, int(rng.integers(1, 500))))
        assert got == want


def _check_invariants(book: OrderBook):
    bid, ask = book.best_bid, book.best_ask
    if bid is not None and ask is not None:
        assert bid < ask
    seen = set()
    for side in Side:
        vol = 0
        for _, orders in book.levels(side):
            seqs = [o.arrival_seq for o in orders]
            assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
            for o in orders:
                assert o.remaining >= 1
                assert o.order_id not in seen
                seen.add(o.order_id)
                vol += o.remaining
        assert vol == (book.bid_volume if side is Side.BUY else book.ask_volume)
    assert len(seen) == len(book)


order_st = st.tuples(
    st.sampled_from(["limit", "market", "cancel"]),
    st.sampled_from(["buy", "sell"]),
    st.integers(95, 105),
    st.integers(1, 10),
    st.integers(1, 4),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(order_st, max_size=120))
def test_book_properties(ops):
    book = OrderBook()
    inventory = {}
    bought = sold = 0
    for oid, (kind, side, price, qty, agent) in enumerate(ops, start=1):
        if kind == "cancel":
            book.cancel(price * 7 % max(oid, 1))
            _check_invariants(book)
            continue
        o = Order(oid, agent, Side(side), OrderKind(kind), qty, price if kind == "limit" else None)
        for t in book.submit(o):
            assert t.quantity >= 1
            assert t.quantity <= qty
            buyer = t.aggressor_agent_id if t.aggressor_side is Side.BUY else t.resting_agent_id
            seller = t.resting_agent_id if t.aggressor_side is Side.BUY else t.aggressor_agent_id
            inventory[buyer] = inventory.get(buyer, 0) + t.quantity
            inventory[seller] = inventory.get(seller, 0) - t.quantity
            bought += t.quantity
            sold += t.quantity
        _check_invariants(book)
    assert sum(inventory.values()) == 0
    assert bought == sold


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_property(seed):
    got, want = replay_both(random_stream(np.random.default_rng(seed), 200))
    assert got == want
