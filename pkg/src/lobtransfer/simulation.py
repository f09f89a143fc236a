"""Build the agent population for a scenario and run one trading day."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple

from .agents import (
    EXCHANGE_ID,
    LEARNER_ID,
    MOMENTUM_BASE,
    NOISE_BASE,
    ZI_BASE,
    Controller,
    ExchangeAgent,
    ExperienceTuple,
    LearnerAgent,
    MomentumAgent,
    NoiseAgent,
    ZeroIntelligenceAgent,
)
from .config import ScenarioConfig
from .kernel import FundamentalSeries, Kernel, generate_fundamental, stream

FUNDAMENTAL_KEY = (0, 1)


@dataclass
class EpisodeRecord:
    scenario: str
    seed: int
    trades: List[Tuple[int, int, int]]
    quotes: List[Tuple[int, Optional[int], Optional[int], int, int]]
    tuples: List[ExperienceTuple]
    rewards: List[float]
    learner_reward: Optional[float]
    fundamental: FundamentalSeries
    events: int = 0
    trace: Optional[List[tuple]] = None
    agent_orders: dict = field(default_factory=dict)


def fundamental_for(scenario: ScenarioConfig, seed: int) -> FundamentalSeries:
    params = scenario.fundamental
    horizon = -(-scenario.duration // params.step)
    return generate_fundamental(params, horizon, seed, rng=stream(seed, *FUNDAMENTAL_KEY), start=scenario.market_open)


def build_agents(scenario: ScenarioConfig, seed: int, controller: Optional[Controller] = None):
    fundamental = fundamental_for(scenario, seed)
    exchange = ExchangeAgent(EXCHANGE_ID, scenario.tick_size, scenario.quote_interval)
    agents: List[Any] = [exchange]
    for k in range(scenario.zero_intelligent):
        aid = ZI_BASE + k
        agents.append(ZeroIntelligenceAgent(aid, scenario.zi, fundamental, stream(seed, aid), scenario.tick_size))
    for k in range(scenario.noise):
        aid = NOISE_BASE + k
        agents.append(NoiseAgent(aid, scenario.noise_agent, stream(seed, aid)))
    for k in range(scenario.momentum):
        aid = MOMENTUM_BASE + k
        agents.append(MomentumAgent(aid, scenario.momentum_agent, stream(seed, aid)))
    learner = None
    if scenario.q_learner:
        if controller is None:
            from .rl import QLearner, QTable

            controller = QLearner(QTable(), rng=stream(seed, LEARNER_ID))
        learner = LearnerAgent(LEARNER_ID, scenario.learner, controller)
        agents.append(learner)
    return agents, exchange, learner, fundamental


def run_episode(
    scenario: ScenarioConfig,
    seed: Optional[int] = None,
    controller: Optional[Controller] = None,
    trace: bool = False,
) -> EpisodeRecord:
    """Simulate one day from open to close. Identical inputs give identical records."""
    seed = scenario.seed if seed is None else seed
    agents, exchange, learner, fundamental = build_agents(scenario, seed, controller)
    kernel = Kernel(agents, scenario.market_open, scenario.market_close, scenario.latency, trace=trace)
    kernel.run()
    orders = {a.agent_id: getattr(a, "orders_sent", 0) for a in agents if hasattr(a, "orders_sent")}
    return EpisodeRecord(
        scenario=scenario.name,
        seed=seed,
        trades=exchange.trades,
        quotes=exchange.quotes,
        tuples=learner.tuples if learner else [],
        rewards=learner.rewards if learner else [],
        learner_reward=float(sum(learner.rewards)) if learner else None,
        fundamental=fundamental,
        events=kernel.delivered,
        trace=kernel.trace,
        agent_orders=orders,
    )
