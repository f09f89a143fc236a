"""Discrete-event kernel: simulated clock, event queue, message delivery.

Everything is driven by a single heap keyed on ``(delivery_time, seq)``;
``seq`` is assigned at scheduling time so same-time events pop in the
order they were scheduled.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .book import Order, QuoteSnapshot, Trade

NS_PER_SECOND = 1_000_000_000
NS_PER_MINUTE = 60 * NS_PER_SECOND
NS_PER_HOUR = 60 * NS_PER_MINUTE


class SimulationError(RuntimeError):
    """Internal inconsistency in the simulation (e.g. an event scheduled in the past)."""


# -- payloads ------------------------------------------------------------


class OrderSubmission(NamedTuple):
    order: Order


class CancelRequest(NamedTuple):
    agent_id: int
    order_id: int


class MarketDataRequest(NamedTuple):
    agent_id: int


class MarketDataSubscribe(NamedTuple):
    agent_id: int
    interval: int


class OrderAccepted(NamedTuple):
    order_id: int
    remaining: int
    resting: bool


class TradeNotification(NamedTuple):
    trade: Trade
    order_id: int
    side: Any  # Side of the recipient in this trade


class MarketDataSnapshot(NamedTuple):
    snapshot: QuoteSnapshot


class Reject(NamedTuple):
    order_id: int
    reason: str


class Wakeup(NamedTuple):
    pass


WAKEUP = Wakeup()


class Event(NamedTuple):
    delivery_time: int
    seq: int
    recipient: int
    payload: Any


class EventQueue:
    """Priority queue of events ordered by (delivery_time, seq)."""

    def __init__(self) -> None:
        self._heap: List[Event] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, delivery_time: int, recipient: int, payload: Any) -> Event:
        event = Event(delivery_time, self._seq, recipient, payload)
        self._seq += 1
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None


@dataclass
class SimClock:
    market_open: int
    market_close: int
    now: int = 0

    def __post_init__(self) -> None:
        if self.market_close <= self.market_open:
            raise ValueError("market_close must be after market_open")
        if self.now < self.market_open:
            self.now = self.market_open


class Agent:
    """Base class for kernel-driven agents.

    Subclasses override :meth:`start` (called once before the first
    event) and :meth:`receive`.
    """

    def __init__(self, agent_id: int) -> None:
        self.agent_id = agent_id
        self.kernel: Optional["Kernel"] = None

    def start(self, kernel: "Kernel") -> None:
        self.kernel = kernel

    def receive(self, time: int, payload: Any) -> None:  # pragma: no cover - interface
        raise NotImplementedError

    def finish(self, time: int) -> None:
        pass


class Kernel:
    """Owns simulated time and routes every inter-agent message.

    All agent-to-agent messages travel with the same fixed ``latency``.
    Events delivered after ``market_close`` are popped and counted but
    not handed to their recipients.
    """

    def __init__(
        self,
        agents: Sequence[Agent],
        market_open: int,
        market_close: int,
        latency: int = 1_000,
        trace: bool = False,
    ) -> None:
        self.agents: Dict[int, Agent] = {}
        for agent in agents:
            if agent.agent_id in self.agents:
                raise ValueError(f"duplicate agent id {agent.agent_id}")
            self.agents[agent.agent_id] = agent
        self.clock = SimClock(market_open, market_close)
        self.latency = latency
        self.queue = EventQueue()
        self.trace: Optional[List[tuple]] = [] if trace else None
        self.delivered = 0
        self.ignored_after_close = 0
        self._next_order_id = 1

    @property
    def now(self) -> int:
        return self.clock.now

    @property
    def market_open(self) -> int:
        return self.clock.market_open

    @property
    def market_close(self) -> int:
        return self.clock.market_close

    def next_order_id(self) -> int:
        oid = self._next_order_id
        self._next_order_id += 1
        return oid

    def schedule(self, delivery_time: int, recipient: int, payload: Any) -> Event:
        if delivery_time < self.clock.now:
            raise SimulationError(
                f"event for agent {recipient} at t={delivery_time} is before now={self.clock.now}"
            )
        return self.queue.push(delivery_time, recipient, payload)

    def send(self, recipient: int, payload: Any) -> Event:
        return self.schedule(self.clock.now + self.latency, recipient, payload)

    def wakeup(self, agent_id: int, time: int) -> Event:
        return self.schedule(time, agent_id, WAKEUP)

    def run(self) -> None:
        for agent in self.agents.values():
            agent.start(self)
        queue = self.queue
        agents = self.agents
        clock = self.clock
        close = clock.market_close
        trace = self.trace
        while len(queue):
            event = queue.pop()
            time = event.delivery_time
            clock.now = time
            if time > close:
                self.ignored_after_close += 1
                continue
            if trace is not None:
                trace.append((time, event.seq, event.recipient, type(event.payload).__name__))
            agents[event.recipient].receive(time, event.payload)
            self.delivered += 1
        for agent in agents.values():
            agent.finish(clock.now)


# -- fundamental value ----------------------------------------------------


@dataclass(frozen=True)
class FundamentalParams:
    """Mean-reverting fundamental: v' = v + kappa (r_bar - v) + sigma * N(0, 1)."""

    r_bar: int = 100_000
    kappa: float = 1e-4
    sigma: float = 2.0
    step: int = NS_PER_SECOND
    v0: Optional[int] = None

    def validate(self) -> None:
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must be in [0, 1], got {self.kappa}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.r_bar < 1:
            raise ValueError("r_bar must be at least one tick")
        if self.v0 is not None and self.v0 < 1:
            raise ValueError("v0 must be at least one tick")


@dataclass(frozen=True)
class FundamentalSeries:
    values: np.ndarray
    params: FundamentalParams
    seed: int
    start: int = 0

    def at(self, time: int) -> int:
        """Value in force at simulation ``time`` (piecewise constant per step)."""
        k = (time - self.start) // self.params.step
        if k < 0:
            k = 0
        elif k >= len(self.values):
            k = len(self.values) - 1
        return int(self.values[k])


def generate_fundamental(
    params: FundamentalParams,
    horizon: int,
    seed: int,
    rng: Optional[np.random.Generator] = None,
    start: int = 0,
) -> FundamentalSeries:
    """Sample ``horizon + 1`` values v_0..v_horizon on the step grid.

    Each value is rounded to an integer tick and floored at 1 before it
    feeds the next step.
    """
    params.validate()
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(seed)
    values = np.empty(horizon + 1, dtype=np.int64)
    v = float(params.r_bar if params.v0 is None else params.v0)
    values[0] = int(v)
    noise = (rng.standard_normal(horizon) if params.sigma > 0 else np.zeros(horizon)).tolist()
    r_bar, kappa, sigma = float(params.r_bar), params.kappa, params.sigma
    for k in range(horizon):
        v = v + kappa * (r_bar - v) + sigma * noise[k]
        v = max(1.0, float(round(v)))
        values[k + 1] = int(v)
    return FundamentalSeries(values, params, seed, start)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; keys never collide across agents."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """A child integer seed, e.g. for episode ``e`` of a training run."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
