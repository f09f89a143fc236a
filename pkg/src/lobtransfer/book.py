"""Limit order book with price-then-FIFO matching.

Prices are integer ticks throughout; only :func:`mid_price` returns a
rational value.
"""
from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Deque, Dict, List, Optional


class Side(str, Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class OrderKind(str, Enum):
    LIMIT = "limit"
    MARKET = "market"


class OrderRejected(ValueError):
    """Raised when the book refuses an order (malformed or duplicate id)."""


@dataclass(slots=True)
class Order:
    order_id: int
    agent_id: int
    side: Side
    kind: OrderKind
    quantity: int
    limit_price: Optional[int] = None
    arrival_seq: int = -1
    # shares still open; set from quantity on submission
    remaining: int = 0

    def __post_init__(self) -> None:
        if self.remaining == 0:
            self.remaining = self.quantity


@dataclass(frozen=True, slots=True)
class Trade:
    aggressor_order_id: int
    resting_order_id: int
    aggressor_agent_id: int
    resting_agent_id: int
    aggressor_side: Side
    price: int
    quantity: int
    time: int


@dataclass(frozen=True, slots=True)
class QuoteSnapshot:
    time: int
    best_bid: Optional[int]
    best_ask: Optional[int]
    bid_volume: int
    ask_volume: int

    @property
    def mid(self) -> Optional[float]:
        if self.best_bid is None or self.best_ask is None:
            return None
        return (self.best_bid + self.best_ask) / 2


def validate_order(order: Order) -> None:
    if not isinstance(order.quantity, int) or order.quantity <= 0:
        raise OrderRejected(f"order {order.order_id}: quantity must be a positive integer")
    if order.kind is OrderKind.LIMIT:
        if order.limit_price is None:
            raise OrderRejected(f"order {order.order_id}: limit order without price")
        if order.limit_price < 1:
            raise OrderRejected(f"order {order.order_id}: limit price below one tick")
    elif order.limit_price is not None:
        raise OrderRejected(f"order {order.order_id}: market order carries a price")


@dataclass
class OrderBook:
    """Bid/ask ladder. Each price level is a FIFO deque of resting orders.

    ``_bid_prices`` and ``_ask_prices`` are kept sorted ascending; the best
    bid is the last bid price and the best ask the first ask price.
    """

    tick_size: int = 1
    _levels: Dict[Side, Dict[int, Deque[Order]]] = field(
        default_factory=lambda: {Side.BUY: {}, Side.SELL: {}}
    )
    _prices: Dict[Side, List[int]] = field(
        default_factory=lambda: {Side.BUY: [], Side.SELL: []}
    )
    _volume: Dict[Side, int] = field(default_factory=lambda: {Side.BUY: 0, Side.SELL: 0})
    _resting: Dict[int, Order] = field(default_factory=dict)
    _seen_ids: set = field(default_factory=set)
    _next_seq: int = 0

    # -- accessors -------------------------------------------------------

    @property
    def best_bid(self) -> Optional[int]:
        prices = self._prices[Side.BUY]
        return prices[-1] if prices else None

    @property
    def best_ask(self) -> Optional[int]:
        prices = self._prices[Side.SELL]
        return prices[0] if prices else None

    @property
    def bid_volume(self) -> int:
        return self._volume[Side.BUY]

    @property
    def ask_volume(self) -> int:
        return self._volume[Side.SELL]

    def __contains__(self, order_id: int) -> bool:
        return order_id in self._resting

    def __len__(self) -> int:
        return len(self._resting)

    def get(self, order_id: int) -> Optional[Order]:
        return self._resting.get(order_id)

    def levels(self, side: Side) -> List[tuple]:
        """(price, [orders...]) pairs, best price first."""
        prices = self._prices[side]
        ordered = reversed(prices) if side is Side.BUY else prices
        return [(p, list(self._levels[side][p])) for p in ordered]

    def snapshot(self, time: int) -> QuoteSnapshot:
        return QuoteSnapshot(time, self.best_bid, self.best_ask, self.bid_volume, self.ask_volume)

    # -- mutation --------------------------------------------------------

    def submit(self, order: Order, time: int = 0) -> List[Trade]:
        """Match ``order`` against the opposite side, resting any limit remainder.

        The exchange assigns ``arrival_seq``. Unfilled market-order
        quantity is dropped.
        """
        validate_order(order)
        if order.order_id in self._seen_ids:
            raise OrderRejected(f"duplicate order id {order.order_id}")
        if order.kind is OrderKind.LIMIT and order.limit_price % self.tick_size:
            raise OrderRejected(f"order {order.order_id}: price off the tick grid")
        self._seen_ids.add(order.order_id)
        order.arrival_seq = self._next_seq
        self._next_seq += 1
        order.remaining = order.quantity

        trades = self._match(order, time)
        if order.remaining > 0 and order.kind is OrderKind.LIMIT:
            self._rest(order)
        return trades

    def cancel(self, order_id: int) -> bool:
        """Remove a resting order. Returns False when the id is not resident."""
        order = self._resting.pop(order_id, None)
        if order is None:
            return False
        side = order.side
        level = self._levels[side][order.limit_price]
        level.remove(order)
        self._volume[side] -= order.remaining
        if not level:
            self._drop_level(side, order.limit_price)
        return True

    def _rest(self, order: Order) -> None:
        side = order.side
        levels = self._levels[side]
        level = levels.get(order.limit_price)
        if level is None:
            level = levels[order.limit_price] = deque()
            bisect.insort(self._prices[side], order.limit_price)
        level.append(order)
        self._volume[side] += order.remaining
        self._resting[order.order_id] = order

    def _drop_level(self, side: Side, price: int) -> None:
        del self._levels[side][price]
        prices = self._prices[side]
        del prices[bisect.bisect_left(prices, price)]

    def _match(self, order: Order, time: int) -> List[Trade]:
        trades: List[Trade] = []
        contra = order.side.opposite
        prices = self._prices[contra]
        levels = self._levels[contra]
        is_buy = order.side is Side.BUY
        limit = order.limit_price
        while order.remaining > 0 and prices:
            best = prices[0] if is_buy else prices[-1]
            if limit is not None and (best > limit if is_buy else best < limit):
                break
            level = levels[best]
            while order.remaining > 0 and level:
                resting = level[0]
                qty = min(order.remaining, resting.remaining)
                order.remaining -= qty
                resting.remaining -= qty
                self._volume[contra] -= qty
                trades.append(
                    Trade(
                        order.order_id,
                        resting.order_id,
                        order.agent_id,
                        resting.agent_id,
                        order.side,
                        best,
                        qty,
                        time,
                    )
                )
                if resting.remaining == 0:
                    level.popleft()
                    del self._resting[resting.order_id]
            if not level:
                self._drop_level(contra, best)
        return trades


def submit_order(book: OrderBook, order: Order, time: int = 0) -> List[Trade]:
    return book.submit(order, time)


def cancel_order(book: OrderBook, order_id: int) -> bool:
    return book.cancel(order_id)


def mid_price(book: OrderBook) -> Optional[Fraction]:
    """(best_ask + best_bid) / 2 as an exact fraction, or None if one-sided."""
    bid, ask = book.best_bid, book.best_ask
    if bid is None or ask is None:
        return None
    return Fraction(bid + ask, 2)
