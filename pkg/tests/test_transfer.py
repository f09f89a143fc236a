import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobtransfer.agents import ALL_STATES, Action, Position, TraderState, legal_actions
from lobtransfer.config import ScenarioConfig, reduced_scale, table1_scenario
from lobtransfer.kernel import NS_PER_MINUTE
from lobtransfer.rl import LearningParams, Policy, QLearner, QTable, episode_seed
from lobtransfer.simulation import run_episode
from lobtransfer.transfer import (
    GreedyController,
    PiReuseController,
    PiReuseParams,
    PolicyLibrary,
    PrqParams,
    pi_reuse_action,
    pi_reuse_choice,
    pi_reuse_episode,
    pi_reuse_learn,
    prq_learn,
    prq_select_policy,
    reuse_gain,
    selection_probabilities,
)

FLAT = TraderState(3, Position.FLAT)
OWNS = TraderState(3, Position.OWNS)


def sell_everywhere():
    t = QTable()
    t.values[:, 1] = 1.0
    return Policy(t)


def short(i=1, minutes=30):
    cfg = reduced_scale(table1_scenario(i))
    return replace(cfg, market_close=cfg.market_open + minutes * NS_PER_MINUTE)


def test_softmax_examples():
    p = selection_probabilities([5.0, -2.0, 100.0, 0.0], 0.0)
    assert np.all(p == 0.25)
    p = selection_probabilities([math.log(2), 0.0], 1.0)
    assert abs(p[0] - 2 / 3) < 1e-12 and abs(p[1] - 1 / 3) < 1e-12
    p = selection_probabilities([1.0, 3.0, 2.0], 1e6)
    assert abs(p[1] - 1.0) < 1e-12
    with pytest.raises(ValueError):
        selection_probabilities([1.0], -1.0)


gains_st = st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=10)


@settings(max_examples=200)
@given(gains_st, st.floats(0.0, 0.01), st.floats(-1e4, 1e4))
def test_softmax_sum_and_shift(w, tau, c):
    p = selection_probabilities(w, tau)
    assert abs(p.sum() - 1.0) <= 1e-12
    shifted = selection_probabilities(np.asarray(w) + c, tau)
    assert np.max(np.abs(p - shifted)) <= 1e-12


@settings(max_examples=100)
@given(gains_st, st.floats(0.0, 1.0), st.randoms())
def test_softmax_relabeling(w, tau, rnd):
    perm = list(range(len(w)))
    rnd.shuffle(perm)
    p = selection_probabilities(w, tau)
    q = selection_probabilities([w[i] for i in perm], tau)
    assert np.allclose(q, p[perm], atol=1e-12)


def test_uniform_selection_frequencies():
    rng = np.random.default_rng(0)
    n, draws = 7, 10_000
    counts = np.bincount([prq_select_policy(np.arange(n) * 100.0, 0.0, rng) for _ in range(draws)], minlength=n)
    p = 1 / n
    sigma = math.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)


@pytest.mark.parametrize("psi", [0.0, 0.25, 0.5, 1.0])
def test_branch_frequencies(psi):
    rng = np.random.default_rng(int(psi * 100))
    table = QTable()
    past = sell_everywhere()
    draws = 10_000
    hits = sum(pi_reuse_choice(past, table, FLAT, psi, 0.3, rng)[1] for _ in range(draws))
    sigma = math.sqrt(draws * psi * (1 - psi))
    assert abs(hits - draws * psi) <= 3 * sigma


def test_pi_reuse_action_branches():
    rng = np.random.default_rng(1)
    table = QTable()
    table.values[FLAT.index] = [0.0, 0.0, 5.0]
    past = sell_everywhere()
    assert {pi_reuse_action(past, table, FLAT, 1.0, 0.0, rng) for _ in range(20)} == {Action.SELL}
    assert {pi_reuse_action(past, table, FLAT, 0.0, 0.0, rng) for _ in range(20)} == {Action.HOLD}


def test_illegal_past_action_falls_back_to_hold():
    # a policy recorded under another position model may propose an illegal action
    class Raw:
        def __call__(self, state):
            return int(Action.BUY)

    rng = np.random.default_rng(0)
    assert pi_reuse_action(Raw(), QTable(), OWNS, 1.0, 0.0, rng) == Action.HOLD
    assert pi_reuse_action(Raw(), QTable(), FLAT, 1.0, 0.0, rng) == Action.BUY


def test_psi_schedule():
    p = PiReuseParams()
    assert p.psi_at(0) == 1.0 and p.psi_at(3) == 0.99**3
    for bad in (dict(psi0=0.0), dict(psi0=1.5), dict(psi_decay=1.2)):
        with pytest.raises(ValueError):
            PiReuseParams(**bad)


def test_psi_one_reproduces_past_trace():
    learner = QLearner(QTable(), LearningParams(), np.random.default_rng(0))
    table = QTable()
    table.values[:, 1] = 3.0
    table.values[::2, 2] = 4.0
    past = Policy(table)
    cfg = short()
    ctrl = PiReuseController(past, learner, PiReuseParams(psi0=1.0, psi_decay=1.0))
    rec = run_episode(cfg, 5, controller=ctrl)
    greedy = GreedyController(QLearner(table.copy(), LearningParams(), np.random.default_rng(0)), learn=False)
    rec2 = run_episode(cfg, 5, controller=greedy)
    assert ctrl.actions == greedy.actions
    assert ctrl.past_branch == len(ctrl.actions)
    assert rec.learner_reward == rec2.learner_reward


def test_pi_reuse_updates_every_transition_and_resets_psi():
    cfg = short()
    learner = QLearner(QTable(), LearningParams(), np.random.default_rng(0))
    _, ctrl = pi_reuse_episode(sell_everywhere(), learner, cfg, PiReuseParams(), seed=1)
    steps = len(ctrl.actions)
    # every decision is closed by the next snapshot, so each one reaches q_update
    assert learner.steps == steps
    assert learner.table.values.any()
    _, ctrl2 = pi_reuse_episode(sell_everywhere(), learner, cfg, PiReuseParams(), seed=2)
    assert learner.steps == steps + len(ctrl2.actions)
    assert ctrl2.psi == 0.99 ** len(ctrl2.actions)


def test_pi_reuse_deterministic_and_zero_episodes():
    cfg = short()
    a, _ = pi_reuse_learn(sell_everywhere(), cfg, 2, seed=3)
    b, _ = pi_reuse_learn(sell_everywhere(), cfg, 2, seed=3)
    assert a == b
    rewards, learner = pi_reuse_learn(sell_everywhere(), cfg, 0, seed=3)
    assert rewards == [] and not learner.table.values.any()
    with pytest.raises(ValueError):
        reuse_gain(sell_everywhere(), cfg, 0)


def test_reuse_gain_reward_free_market():
    base = ScenarioConfig()
    cfg = replace(base, zero_intelligent=0, market_close=base.market_open + 10 * NS_PER_MINUTE)
    assert reuse_gain(sell_everywhere(), cfg, 2, seed=0) == 0.0


def test_reuse_gain_is_mean_of_curve():
    cfg = short()
    rewards, _ = pi_reuse_learn(sell_everywhere(), cfg, 3, seed=4)
    assert reuse_gain(sell_everywhere(), cfg, 3, seed=4) == pytest.approx(np.mean(rewards))


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(-1e3, 1e3, allow_nan=False)), max_size=40))
def test_library_incremental_mean(events):
    lib = PolicyLibrary([sell_everywhere()] * 3)
    per = {j: [] for j in range(4)}
    for j, r in events:
        lib.record(j, r)
        per[j].append(r)
    for j, rs in per.items():
        assert lib.uses[j] == len(rs)
        if rs:
            assert lib.gains[j] == pytest.approx(np.mean(rs), rel=1e-9, abs=1e-9)
        else:
            assert lib.gains[j] == 0.0


def test_library_first_update_exact():
    lib = PolicyLibrary([sell_everywhere()])
    lib.record(1, -123.25)
    assert lib.gains[1] == -123.25


def test_temperature_schedule():
    p = PrqParams()
    taus = [p.temperature(e, 100) for e in range(100)]
    assert all(b >= a for a, b in zip(taus, taus[1:]))
    assert taus[0] < 2e-5 and abs(taus[50] - 0.001) < 1e-15 and taus[-1] < 0.002
    assert all(0 <= t <= 0.002 for t in taus)


def test_prq_learn_contract():
    cfg = short(minutes=20)
    res = prq_learn([sell_everywhere(), Policy(QTable())], cfg, 6, seed=2)
    assert len(res.rewards) == len(res.selected) == 6
    assert res.gains.shape == res.probabilities.shape == (6, 3)
    assert np.allclose(res.probabilities[0], 1 / 3, atol=2e-5)
    assert np.allclose(res.probabilities.sum(axis=1), 1.0, atol=1e-12)
    for j in range(3):
        picked = [r for r, s in zip(res.rewards, res.selected) if s == j]
        if picked:
            assert res.library.gains[j] == pytest.approx(np.mean(picked))
    again = prq_learn([sell_everywhere(), Policy(QTable())], cfg, 6, seed=2)
    assert again.rewards == res.rewards and again.selected == res.selected
    with pytest.raises(ValueError):
        prq_learn([], cfg, 1)


def test_prq_greedy_episode_has_no_exploration():
    cfg = short(minutes=20)
    learner = QLearner(QTable(), LearningParams(), np.random.default_rng(0))
    ctrl = GreedyController(learner)
    run_episode(cfg, 0, controller=ctrl)
    assert set(ctrl.actions) <= {0, 1, 2} and learner.steps == len(ctrl.actions)
