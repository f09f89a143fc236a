import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobtransfer.agents import ALL_STATES, Action, Position, TraderState, legal_actions
from lobtransfer.config import reduced_scale, table1_scenario
from lobtransfer.rl import (
    LearningParams,
    Policy,
    QLearner,
    QTable,
    accumulated_return,
    epsilon_greedy,
    q_update,
    qtable_rows,
    run_q_learning,
    train,
    trader_legal_mask,
    value_iteration,
)
from reference import chain_mdp

FLAT = TraderState(3, Position.FLAT)
OWNS = TraderState(3, Position.OWNS)
OWES = TraderState(3, Position.OWES)


def test_q_update_examples():
    t = QTable()
    q_update(t, FLAT, Action.BUY, 1.0, OWNS, alpha=0.5, gamma=0.98)
    assert t.values[FLAT.index, 0] == 0.5
    assert np.count_nonzero(t.values) == 1

    t = QTable()
    q_update(t, FLAT, Action.SELL, 0.0, OWES, alpha=0.7, gamma=0.98)
    assert not t.values.any()

    t = QTable()
    t.values[OWNS.index, 1] = 100.0
    q_update(t, FLAT, Action.BUY, 7.0, OWNS, alpha=1.0, gamma=0.0)
    assert t.values[FLAT.index, 0] == 7.0


def test_q_update_max_over_legal_only():
    t = QTable()
    t.values[OWNS.index] = [-5.0, -3.0, -4.0]  # BUY is illegal when owning
    q_update(t, FLAT, Action.BUY, 0.0, OWNS, alpha=1.0, gamma=1.0)
    assert t.values[FLAT.index, 0] == -3.0


def test_q_update_illegal_cell():
    with pytest.raises(ValueError):
        q_update(QTable(), OWNS, Action.BUY, 1.0, FLAT, 0.5, 0.9)


def test_mask_matches_legal_actions():
    mask = trader_legal_mask()
    for s in ALL_STATES:
        assert {Action(a) for a in np.flatnonzero(mask[s.index])} == set(legal_actions(s))


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10), st.floats(0.05, 1.0), st.floats(0.0, 0.99), st.floats(-5, 5))
def test_q_update_contraction(r, alpha, gamma, q_next):
    t = QTable()
    t.values[OWNS.index] = [0.0, q_next, q_next]
    target = r + gamma * q_next
    prev = abs(t.values[FLAT.index, 0] - target)
    for _ in range(30):
        q_update(t, FLAT, Action.BUY, r, OWNS, alpha, gamma)
        gap = abs(t.values[FLAT.index, 0] - target)
        assert gap <= prev + 1e-12
        prev = gap


def test_epsilon_greedy_extremes():
    t = QTable()
    rng = np.random.default_rng(0)
    assert {epsilon_greedy(t, FLAT, 0.0, rng) for _ in range(50)} == {0}
    assert {epsilon_greedy(t, OWNS, 0.0, rng) for _ in range(50)} == {1}
    t.values[FLAT.index] = [0.0, 2.0, 1.0]
    assert epsilon_greedy(t, FLAT, 0.0, rng) == 1


def test_epsilon_one_uniform_chi2():
    from scipy.stats import chisquare

    t = QTable()
    t.values[FLAT.index] = [5.0, 0.0, 0.0]
    rng = np.random.default_rng(1)
    counts = np.bincount([epsilon_greedy(t, FLAT, 1.0, rng) for _ in range(10_000)], minlength=3)
    assert chisquare(counts).pvalue > 0.001
    counts = np.bincount([epsilon_greedy(t, OWNS, 1.0, rng) for _ in range(10_000)], minlength=3)
    assert counts[0] == 0


def test_accumulated_return():
    assert accumulated_return([1, 1, 1], 0.0) == 1
    assert accumulated_return([1, 1], 1.0) == 2
    assert accumulated_return([1, 1, 1], 0.5) == 1.75


def test_decay_exact():
    p = LearningParams()
    learner = QLearner(QTable(), p, np.random.default_rng(0))
    for n in range(300):
        assert learner.alpha == 0.99 * 0.999**n
        assert learner.epsilon == 0.999 * 0.9995**n
        learner.observe(FLAT, Action.HOLD, 0.0, FLAT)
    assert 0 < p.alpha_at(10**5) <= 1 and 0 < p.epsilon_at(10**5) <= 1


def test_policy_greedy_total():
    t = QTable()
    t.values[OWNS.index] = [99.0, -1.0, -2.0]
    pol = Policy(t)
    assert pol(OWNS) == Action.SELL
    assert len(pol.actions) == 21
    assert all(Action(pol(s)) in legal_actions(s) for s in ALL_STATES)


def _chain_oracle():
    n, gamma = 5, 0.98
    transition = chain_mdp(n)
    q_star = value_iteration(n, 2, transition, gamma, terminal_states=(n - 1,))
    table = QTable(n, 2)
    rng = np.random.default_rng(0)
    params = LearningParams(gamma=gamma)
    run_q_learning(lambda: int(rng.integers(0, n - 1)), transition, table, params, 500, rng)
    return table.values, q_star


def test_chain_mdp_matches_value_iteration():
    q, q_star = _chain_oracle()
    # gamma^k for the three steps left of the goal, discounting 1 on arrival
    assert q_star[3, 1] == 1.0 and q_star[0, 1] == pytest.approx(0.98**3)
    assert np.max(np.abs(q[:4] - q_star[:4])) <= 1e-6


def test_train_zero_episodes():
    res = train(reduced_scale(table1_scenario(1)), episodes=0)
    assert not res.table.values.any() and res.episode_rewards == [] and res.tuples == []


def test_train_deterministic_and_logged():
    sc = reduced_scale(table1_scenario(5))
    a = train(sc, seed=4, episodes=2)
    b = train(sc, seed=4, episodes=2)
    assert a.episode_rewards == b.episode_rewards and a.table == b.table
    assert len(a.tuples) == a.steps == 2 * 118
    assert [e for e, _, _ in a.tuples] == [0] * 118 + [1] * 118


def test_train_needs_learner():
    from dataclasses import replace

    with pytest.raises(ValueError):
        train(replace(table1_scenario(1), q_learner=0), episodes=1)


def test_qtable_rows_only_legal():
    rows = qtable_rows(QTable())
    assert len(rows) == 7 * (2 + 3 + 2)
