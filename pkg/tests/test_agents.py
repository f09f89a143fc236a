from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lobtransfer.agents import (
    ALL_STATES,
    EXCHANGE_ID,
    N_STATES,
    Action,
    ExchangeAgent,
    MomentumAgent,
    NoiseAgent,
    Position,
    TraderState,
    ZeroIntelligenceAgent,
    exchange_step,
    imbalance_bucket,
    learner_observe,
    legal_actions,
    momentum_signal,
    noise_order,
    zi_limit_price,
)
from lobtransfer.book import Order, OrderBook, OrderKind, QuoteSnapshot, Side
from lobtransfer.config import MomentumParams, NoiseParams, ZIParams, reduced_scale, table1_scenario
from lobtransfer.kernel import (
    NS_PER_MINUTE,
    CancelRequest,
    FundamentalParams,
    Kernel,
    MarketDataRequest,
    MarketDataSnapshot,
    OrderAccepted,
    OrderSubmission,
    Reject,
    TradeNotification,
    generate_fundamental,
)
from lobtransfer.simulation import build_agents, run_episode


def snap(bv, av, bid=100, ask=102):
    return QuoteSnapshot(0, bid, ask, bv, av)


def test_quantizer_examples():
    assert learner_observe(snap(0, 0), 0) == TraderState(3, Position.FLAT)
    assert learner_observe(snap(1000, 0), 1) == TraderState(6, Position.OWNS)
    assert learner_observe(snap(0, 31), -1) == TraderState(1, Position.OWES)


@pytest.mark.parametrize(
    "d,bucket",
    [(-1000, 0), (-100, 0), (-99, 1), (-30, 1), (-29, 2), (-5, 2), (-4, 3), (0, 3), (4, 3), (5, 4), (29, 4),
     (30, 5), (99, 5), (100, 6)],
)
def test_quantizer_edges(d, bucket):
    assert imbalance_bucket(d) == bucket


@given(st.integers(-10**6, 10**6))
def test_quantizer_symmetric(d):
    assert imbalance_bucket(d) + imbalance_bucket(-d) == 6 or d == 0


def test_state_space():
    assert len({s.index for s in ALL_STATES}) == N_STATES == 21
    for s in ALL_STATES:
        assert TraderState.from_index(s.index) == s


def test_legal_actions():
    assert set(legal_actions(TraderState(0, Position.OWNS))) == {Action.SELL, Action.HOLD}
    assert set(legal_actions(TraderState(0, Position.OWES))) == {Action.BUY, Action.HOLD}
    assert set(legal_actions(TraderState(0, Position.FLAT))) == set(Action)


def test_exchange_crossing_notifies_both():
    book = OrderBook()
    exchange_step(book, 0, OrderSubmission(Order(1, 10, Side.SELL, OrderKind.LIMIT, 5, 100)))
    out, trades = exchange_step(book, 1, OrderSubmission(Order(2, 20, Side.BUY, OrderKind.MARKET, 2)))
    assert len(trades) == 1
    notes = [(r, m.order_id, m.side) for r, m in out if isinstance(m, TradeNotification)]
    assert notes == [(20, 2, Side.BUY), (10, 1, Side.SELL)]
    assert isinstance(out[0][1], OrderAccepted)


def test_exchange_unknown_cancel_rejects():
    out, _ = exchange_step(OrderBook(), 0, CancelRequest(5, 77))
    assert len(out) == 1 and out[0][0] == 5 and isinstance(out[0][1], Reject)


def test_exchange_malformed_rejects():
    out, _ = exchange_step(OrderBook(), 0, OrderSubmission(Order(1, 5, Side.BUY, OrderKind.LIMIT, 1, None)))
    assert isinstance(out[0][1], Reject)


def test_exchange_one_sided_snapshot():
    book = OrderBook()
    exchange_step(book, 0, OrderSubmission(Order(1, 10, Side.BUY, OrderKind.LIMIT, 5, 100)))
    out, _ = exchange_step(book, 3, MarketDataRequest(9))
    recipient, msg = out[0]
    assert recipient == 9 and isinstance(msg, MarketDataSnapshot)
    assert msg.snapshot.best_bid == 100 and msg.snapshot.best_ask is None


def test_zi_price_placement():
    assert zi_limit_price(10_000, 10, Side.BUY) == 9990
    assert zi_limit_price(10_000, 10, Side.SELL) == 10_010
    assert zi_limit_price(10_003, 0, Side.BUY, tick_size=5) == 10_000
    assert zi_limit_price(10_003, 0, Side.SELL, tick_size=5) == 10_005


def _zi(params, seed=0):
    f = generate_fundamental(FundamentalParams(r_bar=10_000, kappa=0.0, sigma=0.0), 10, seed=0)
    return ZeroIntelligenceAgent(100_000, params, f, np.random.default_rng(seed))


def test_zi_deterministic_without_noise():
    zi = _zi(ZIParams(obs_noise=0.0, offset_min=1, offset_max=1))
    for k in range(20):
        _, order = zi.step(0, k + 1)
        assert order.limit_price == (9999 if order.side is Side.BUY else 10_001)


def test_zi_replace_semantics():
    zi = _zi(ZIParams())
    cancel, first = zi.step(0, 1)
    assert cancel is None
    cancel, second = zi.step(1, 2)
    assert cancel == first.order_id


def test_momentum_signal():
    assert momentum_signal([200] * 30 + [202] * 20) is Side.BUY
    assert momentum_signal([200] * 50) is Side.SELL
    assert momentum_signal([200] * 49) is None
    # mean20 = 101, mean50 = 100 (doubled mids)
    assert momentum_signal([200 - 4] * 15 + [200 - 2] * 15 + [202] * 20) is Side.BUY
    assert momentum_signal([202] * 30 + [200] * 20) is Side.SELL


def test_momentum_quotes_own_side():
    agent = MomentumAgent(300_000, MomentumParams(), np.random.default_rng(0))
    for _ in range(49):
        assert agent.step(QuoteSnapshot(0, 100, 110, 1, 1), 1) is None
    o = agent.step(QuoteSnapshot(0, 100, 110, 1, 1), 2)
    assert o.side is Side.SELL and o.limit_price == 110 and o.kind is OrderKind.LIMIT
    assert 1 <= o.quantity <= 10


def test_noise_order():
    o = noise_order(np.random.default_rng(0), NoiseParams(min_size=1, max_size=1), 200_000, 5)
    assert o.kind is OrderKind.MARKET and o.quantity == 1
    sides = {noise_order(np.random.default_rng(s), NoiseParams(), 1, 1).side for s in range(20)}
    assert sides == {Side.BUY, Side.SELL}


def short(i, minutes=40):
    cfg = reduced_scale(table1_scenario(i))
    return replace(cfg, market_close=cfg.market_open + minutes * NS_PER_MINUTE)


def test_population_invariants():
    cfg = short(4, minutes=60)
    agents, exchange, learner, _ = build_agents(cfg, 5)
    zi_ids = {a.agent_id for a in agents if isinstance(a, ZeroIntelligenceAgent)}
    original = exchange.receive
    worst = [0]

    def checked(time, payload):
        original(time, payload)
        per_agent = {}
        for oid, order in exchange.book._resting.items():
            if order.agent_id in zi_ids:
                per_agent[order.agent_id] = per_agent.get(order.agent_id, 0) + 1
        worst[0] = max([worst[0], *per_agent.values()])
        assert learner.position in (-1, 0, 1)

    exchange.receive = checked
    Kernel(agents, cfg.market_open, cfg.market_close, cfg.latency).run()
    assert worst[0] == 1
    for a in agents:
        if isinstance(a, NoiseAgent):
            assert a.orders_sent == 1
    assert set(learner.positions) <= {-1, 0, 1}


def test_momentum_silent_before_history():
    # 50 observations at 20 s spacing take more than 16 minutes
    cfg = short(7, minutes=16)
    agents, *_ = build_agents(cfg, 2)
    Kernel(agents, cfg.market_open, cfg.market_close, cfg.latency).run()
    assert all(a.orders_sent == 0 for a in agents if isinstance(a, MomentumAgent))


def test_learner_tuple_count():
    rec = run_episode(reduced_scale(table1_scenario(1)), seed=2)
    # 2-hour day, one decision per minute; the last wake only closes a transition
    assert len(rec.tuples) == len(rec.rewards) == 118
    for t in rec.tuples:
        assert t.action in legal_actions(t.state)
    assert rec.learner_reward == pytest.approx(sum(rec.rewards))
