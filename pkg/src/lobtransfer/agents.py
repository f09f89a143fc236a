"""Background agents, the exchange, and the trading learner's interface.

The learner's decision logic lives in a *controller* object (see
:mod:`lobtransfer.rl` and :mod:`lobtransfer.transfer`); the agent here
only turns market data into states, executes actions, and books
rewards.
"""
from __future__ import annotations

from collections import deque
from enum import IntEnum
from typing import Any, Deque, List, NamedTuple, Optional, Protocol, Tuple

import numpy as np

from .book import Order, OrderBook, OrderKind, OrderRejected, QuoteSnapshot, Side
from .config import LearnerParams, MomentumParams, NoiseParams, ZIParams
from .kernel import (
    Agent,
    CancelRequest,
    FundamentalSeries,
    MarketDataRequest,
    MarketDataSnapshot,
    MarketDataSubscribe,
    OrderAccepted,
    OrderSubmission,
    Reject,
    SimulationError,
    TradeNotification,
    Wakeup,
)

EXCHANGE_ID = 0
ZI_BASE = 100_000
NOISE_BASE = 200_000
MOMENTUM_BASE = 300_000
LEARNER_ID = 400_000


# -- learner state and actions --------------------------------------------


class Position(IntEnum):
    OWES = -1
    FLAT = 0
    OWNS = 1


class Action(IntEnum):
    BUY = 0
    SELL = 1
    HOLD = 2


ACTIONS = (Action.BUY, Action.SELL, Action.HOLD)

# |imbalance| thresholds; buckets are symmetric around the centre bucket 3
IMBALANCE_EDGES = (5, 30, 100)
N_BUCKETS = 2 * len(IMBALANCE_EDGES) + 1
N_POSITIONS = 3
N_STATES = N_BUCKETS * N_POSITIONS


class TraderState(NamedTuple):
    bucket: int
    position: Position

    @property
    def index(self) -> int:
        return self.bucket * N_POSITIONS + (int(self.position) + 1)

    @classmethod
    def from_index(cls, index: int) -> "TraderState":
        bucket, pos = divmod(index, N_POSITIONS)
        return cls(bucket, Position(pos - 1))


ALL_STATES = tuple(TraderState.from_index(i) for i in range(N_STATES))


class ExperienceTuple(NamedTuple):
    state: TraderState
    action: Action
    reward: float
    next_state: TraderState


def imbalance_bucket(imbalance: int) -> int:
    """Quantize bid_volume - ask_volume into 7 buckets.

    Edges are (-inf, -100, -30, -5, 5, 30, 100, inf) with the centre
    bucket covering |d| < 5.
    """
    magnitude = abs(imbalance)
    level = 0
    for edge in IMBALANCE_EDGES:
        if magnitude >= edge:
            level += 1
    centre = len(IMBALANCE_EDGES)
    return centre + level if imbalance >= 0 else centre - level


def learner_observe(snapshot: Optional[QuoteSnapshot], position: int) -> TraderState:
    if snapshot is None:
        imbalance = 0
    else:
        imbalance = (snapshot.bid_volume or 0) - (snapshot.ask_volume or 0)
    return TraderState(imbalance_bucket(imbalance), Position(position))


_LEGAL = {
    Position.OWNS: (Action.SELL, Action.HOLD),
    Position.OWES: (Action.BUY, Action.HOLD),
    Position.FLAT: (Action.BUY, Action.SELL, Action.HOLD),
}


def legal_actions(state: TraderState) -> Tuple[Action, ...]:
    return _LEGAL[Position(state.position)]


class Controller(Protocol):
    """What the learner agent needs from a learning algorithm."""

    def act(self, state: TraderState) -> Action: ...

    def observe(self, state: TraderState, action: Action, reward: float, next_state: TraderState) -> None: ...


# -- exchange --------------------------------------------------------------


def exchange_step(book: OrderBook, time: int, payload: Any) -> Tuple[List[Tuple[int, Any]], list]:
    """Apply one inbound message to ``book``.

    Returns (outbound messages as (recipient, payload) pairs, trades).
    """
    out: List[Tuple[int, Any]] = []
    trades: list = []
    kind = type(payload)
    if kind is OrderSubmission:
        order = payload.order
        try:
            trades = book.submit(order, time)
        except OrderRejected as exc:
            out.append((order.agent_id, Reject(order.order_id, str(exc))))
            return out, trades
        resting = order.kind is OrderKind.LIMIT and order.remaining > 0
        out.append((order.agent_id, OrderAccepted(order.order_id, order.remaining, resting)))
        for tr in trades:
            out.append((tr.aggressor_agent_id, TradeNotification(tr, tr.aggressor_order_id, tr.aggressor_side)))
            out.append(
                (tr.resting_agent_id, TradeNotification(tr, tr.resting_order_id, tr.aggressor_side.opposite))
            )
    elif kind is CancelRequest:
        if not book.cancel(payload.order_id):
            out.append((payload.agent_id, Reject(payload.order_id, "not found")))
    elif kind is MarketDataRequest:
        out.append((payload.agent_id, MarketDataSnapshot(book.snapshot(time))))
    else:
        raise SimulationError(f"exchange cannot handle {kind.__name__}")
    return out, trades


class ExchangeAgent(Agent):
    """Hosts the book, records the trade tape and a fixed-interval quote tape."""

    def __init__(self, agent_id: int = EXCHANGE_ID, tick_size: int = 1, quote_interval: int = 10**9) -> None:
        super().__init__(agent_id)
        self.book = OrderBook(tick_size=tick_size)
        self.quote_interval = quote_interval
        self.trades: List[Tuple[int, int, int]] = []
        self.quotes: List[Tuple[int, Optional[int], Optional[int], int, int]] = []
        self.subscribers: dict = {}
        self.rejects = 0

    def start(self, kernel) -> None:
        super().start(kernel)
        kernel.wakeup(self.agent_id, kernel.market_open)

    def receive(self, time: int, payload: Any) -> None:
        kernel = self.kernel
        if type(payload) is Wakeup:
            book = self.book
            snap = (time, book.best_bid, book.best_ask, book.bid_volume, book.ask_volume)
            self.quotes.append(snap)
            if self.subscribers:
                elapsed = time - kernel.market_open
                for agent_id, interval in self.subscribers.items():
                    if elapsed % interval == 0:
                        kernel.send(agent_id, MarketDataSnapshot(book.snapshot(time)))
            nxt = time + self.quote_interval
            if nxt <= kernel.market_close:
                kernel.wakeup(self.agent_id, nxt)
            return
        if type(payload) is MarketDataSubscribe:
            self.subscribers[payload.agent_id] = payload.interval
            return
        out, trades = exchange_step(self.book, time, payload)
        for tr in trades:
            self.trades.append((tr.time, tr.price, tr.quantity))
        for recipient, msg in out:
            if type(msg) is Reject:
                self.rejects += 1
            kernel.send(recipient, msg)


# -- zero intelligence -----------------------------------------------------


def zi_limit_price(valuation: int, offset: int, side: Side, tick_size: int = 1) -> int:
    raw = valuation - offset if side is Side.BUY else valuation + offset
    price = (raw // tick_size) * tick_size if side is Side.BUY else -((-raw) // tick_size) * tick_size
    return max(tick_size, price)


class ZeroIntelligenceAgent(Agent):
    """Liquidity provider quoting around a noisy read of the fundamental.

    On each wake it cancels its resting order (if any), draws a side, a
    noisy valuation and an offset, and places one limit order; the next
    wake follows an exponential inter-arrival time.
    """

    def __init__(
        self,
        agent_id: int,
        params: ZIParams,
        fundamental: FundamentalSeries,
        rng: np.random.Generator,
        tick_size: int = 1,
    ) -> None:
        super().__init__(agent_id)
        self.params = params
        self.fundamental = fundamental
        self.rng = rng
        self.tick_size = tick_size
        # the order we may still have in the book; cancelled on the next wake
        self.open_id: Optional[int] = None
        self.open_remaining = 0
        self.orders_sent = 0
        self.cancels_sent = 0

    def start(self, kernel) -> None:
        super().start(kernel)
        self._schedule_next(kernel.market_open)

    def _schedule_next(self, now: int) -> None:
        gap = int(self.rng.exponential(self.params.mean_wake)) + 1
        nxt = now + gap
        if nxt <= self.kernel.market_close:
            self.kernel.wakeup(self.agent_id, nxt)

    def step(self, time: int, order_id: int) -> Tuple[Optional[int], Order]:
        """One wake: (id of the order to cancel or None, the new order)."""
        p = self.params
        rng = self.rng
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        valuation = int(round(self.fundamental.at(time) + p.obs_noise * rng.standard_normal()))
        offset = int(rng.integers(p.offset_min, p.offset_max + 1))
        price = zi_limit_price(valuation, offset, side, self.tick_size)
        cancel = self.open_id
        order = Order(order_id, self.agent_id, side, OrderKind.LIMIT, p.order_size, price)
        self.open_id = order_id
        self.open_remaining = p.order_size
        return cancel, order

    def receive(self, time: int, payload: Any) -> None:
        kind = type(payload)
        if kind is Wakeup:
            kernel = self.kernel
            cancel, order = self.step(time, kernel.next_order_id())
            if cancel is not None:
                kernel.send(EXCHANGE_ID, CancelRequest(self.agent_id, cancel))
                self.cancels_sent += 1
            kernel.send(EXCHANGE_ID, OrderSubmission(order))
            self.orders_sent += 1
            self._schedule_next(time)
        elif kind is OrderAccepted:
            if not payload.resting and payload.order_id == self.open_id:
                self.open_id = None
        elif kind is TradeNotification:
            if payload.order_id == self.open_id:
                self.open_remaining -= payload.trade.quantity
                if self.open_remaining <= 0:
                    self.open_id = None


# -- momentum --------------------------------------------------------------


def momentum_signal(doubled_mids, short_window: int = 20, long_window: int = 50) -> Optional[Side]:
    """BUY if mean of the last ``short_window`` mids exceeds that of the last
    ``long_window``, SELL otherwise; None with fewer than ``long_window``
    observations.

    Mids are passed doubled (bid + ask) so the comparison is exact integer
    arithmetic.
    """
    n = len(doubled_mids)
    if n < long_window:
        return None
    obs = list(doubled_mids)[-long_window:]
    short_sum = sum(obs[-short_window:])
    long_sum = sum(obs)
    return Side.BUY if short_sum * long_window > long_sum * short_window else Side.SELL


class MomentumAgent(Agent):
    """Trend follower: compares short and long moving averages of the mid.

    Orders are limit orders at the best quote on the agent's own side
    (best bid for a buy, best ask for a sell).
    """

    def __init__(self, agent_id: int, params: MomentumParams, rng: np.random.Generator) -> None:
        super().__init__(agent_id)
        self.params = params
        self.rng = rng
        self.mids: Deque[int] = deque(maxlen=params.long_window)
        self.orders_sent = 0

    def start(self, kernel) -> None:
        super().start(kernel)
        first = kernel.market_open + int(self.rng.integers(0, self.params.wake_interval)) + 1
        if first <= kernel.market_close:
            kernel.wakeup(self.agent_id, first)

    def step(self, snapshot: QuoteSnapshot, order_id: int) -> Optional[Order]:
        if snapshot.best_bid is not None and snapshot.best_ask is not None:
            self.mids.append(snapshot.best_bid + snapshot.best_ask)
        p = self.params
        side = momentum_signal(self.mids, p.short_window, p.long_window)
        if side is None:
            return None
        price = snapshot.best_bid if side is Side.BUY else snapshot.best_ask
        size = int(self.rng.integers(p.min_size, p.max_size + 1))
        if price is None:
            return None
        return Order(order_id, self.agent_id, side, OrderKind.LIMIT, size, price)

    def receive(self, time: int, payload: Any) -> None:
        kind = type(payload)
        kernel = self.kernel
        if kind is Wakeup:
            kernel.send(EXCHANGE_ID, MarketDataRequest(self.agent_id))
            nxt = time + self.params.wake_interval
            if nxt <= kernel.market_close:
                kernel.wakeup(self.agent_id, nxt)
        elif kind is MarketDataSnapshot:
            order = self.step(payload.snapshot, kernel.next_order_id())
            if order is not None:
                kernel.send(EXCHANGE_ID, OrderSubmission(order))
                self.orders_sent += 1


# -- noise -----------------------------------------------------------------


def noise_order(rng: np.random.Generator, params: NoiseParams, agent_id: int, order_id: int) -> Order:
    side = Side.BUY if rng.random() < 0.5 else Side.SELL
    size = int(rng.integers(params.min_size, params.max_size + 1))
    return Order(order_id, agent_id, side, OrderKind.MARKET, size)


class NoiseAgent(Agent):
    """Places exactly one market order per day at a uniformly drawn time."""

    def __init__(self, agent_id: int, params: NoiseParams, rng: np.random.Generator) -> None:
        super().__init__(agent_id)
        self.params = params
        self.rng = rng
        self.orders_sent = 0
        self.wake_time: Optional[int] = None

    def start(self, kernel) -> None:
        super().start(kernel)
        self.wake_time = int(self.rng.integers(kernel.market_open, kernel.market_close))
        kernel.wakeup(self.agent_id, self.wake_time)

    def receive(self, time: int, payload: Any) -> None:
        if type(payload) is Wakeup and self.orders_sent == 0:
            order = noise_order(self.rng, self.params, self.agent_id, self.kernel.next_order_id())
            self.kernel.send(EXCHANGE_ID, OrderSubmission(order))
            self.orders_sent += 1


# -- learner ---------------------------------------------------------------


class LearnerAgent(Agent):
    """Trades one share at a time by market order under a controller's policy.

    Every ``decision_interval`` it requests a snapshot, books the
    mark-to-market reward of the previous decision, and asks the
    controller for the next action. The last wake of the day only closes
    the previous transition.
    """

    def __init__(self, agent_id: int, params: LearnerParams, controller: Controller) -> None:
        super().__init__(agent_id)
        self.params = params
        self.controller = controller
        self.position = 0
        self.cash = 0.0
        self.mark: Optional[float] = None
        self.pending: Optional[Tuple[TraderState, Action, float]] = None
        self.tuples: List[ExperienceTuple] = []
        self.rewards: List[float] = []
        self.positions: List[int] = []
        self.fills = 0
        self._wake_time = 0

    def start(self, kernel) -> None:
        super().start(kernel)
        self._schedule(kernel.market_open + self.params.decision_interval)

    def _schedule(self, t: int) -> None:
        # a wake is useful only if its snapshot comes back before the close
        if t + 2 * self.kernel.latency <= self.kernel.market_close:
            self.kernel.wakeup(self.agent_id, t)

    def _is_last(self, t: int) -> bool:
        nxt = t + self.params.decision_interval
        return nxt + 2 * self.kernel.latency > self.kernel.market_close

    def wealth(self) -> float:
        if self.position == 0 or self.mark is None:
            return self.cash
        return self.cash + self.position * self.mark

    def receive(self, time: int, payload: Any) -> None:
        kind = type(payload)
        kernel = self.kernel
        if kind is Wakeup:
            self._wake_time = time
            kernel.send(EXCHANGE_ID, MarketDataRequest(self.agent_id))
            self._schedule(time + self.params.decision_interval)
        elif kind is MarketDataSnapshot:
            snap = payload.snapshot
            if snap.best_bid is not None and snap.best_ask is not None:
                self.mark = (snap.best_bid + snap.best_ask) / 2
            state = learner_observe(snap, self.position)
            w = self.wealth()
            if self.pending is not None:
                s, a, w_prev = self.pending
                reward = w - w_prev
                self.controller.observe(s, a, reward, state)
                self.tuples.append(ExperienceTuple(s, a, reward, state))
                self.rewards.append(reward)
                self.pending = None
            if self._is_last(self._wake_time):
                return
            action = Action(self.controller.act(state))
            if action not in legal_actions(state):
                raise SimulationError(f"controller chose illegal {action.name} in {state}")
            if action is not Action.HOLD:
                side = Side.BUY if action is Action.BUY else Side.SELL
                order = Order(kernel.next_order_id(), self.agent_id, side, OrderKind.MARKET, self.params.order_size)
                kernel.send(EXCHANGE_ID, OrderSubmission(order))
            self.pending = (state, action, w)
            self.positions.append(self.position)
        elif kind is TradeNotification:
            tr = payload.trade
            if payload.side is Side.BUY:
                self.position += tr.quantity
                self.cash -= tr.price * tr.quantity
            else:
                self.position -= tr.quantity
                self.cash += tr.price * tr.quantity
            if self.mark is None:
                self.mark = float(tr.price)
            self.fills += 1
