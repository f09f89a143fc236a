"""Tabular Q-learning with epsilon-greedy exploration and per-step decay.

The table is indexed by integer state and action ids. For the trading
task these come from :class:`~lobtransfer.agents.TraderState` (21
states) and :class:`~lobtransfer.agents.Action` (3 actions); illegal
cells are masked out of every max, argmax and update.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .agents import (
    ACTIONS,
    ALL_STATES,
    N_STATES,
    ExperienceTuple,
    TraderState,
    legal_actions,
)
from .config import ScenarioConfig
from .kernel import derive_seed, stream


def trader_legal_mask() -> np.ndarray:
    mask = np.zeros((N_STATES, len(ACTIONS)), dtype=bool)
    for s in ALL_STATES:
        for a in legal_actions(s):
            mask[s.index, int(a)] = True
    return mask


class QTable:
    """Dense action-value table with a legality mask."""

    def __init__(self, n_states: int = N_STATES, n_actions: int = 3, legal: Optional[np.ndarray] = None):
        if legal is None:
            legal = trader_legal_mask() if (n_states, n_actions) == (N_STATES, 3) else np.ones(
                (n_states, n_actions), dtype=bool
            )
        if legal.shape != (n_states, n_actions):
            raise ValueError("legal mask shape does not match the table")
        self.values = np.zeros((n_states, n_actions), dtype=float)
        self.legal = legal.copy()
        self._legal_lists = [tuple(int(a) for a in np.flatnonzero(row)) for row in self.legal]

    def copy(self) -> "QTable":
        out = QTable(*self.values.shape, legal=self.legal)
        out.values[:] = self.values
        return out

    def legal_actions(self, s: int) -> Tuple[int, ...]:
        return self._legal_lists[s]

    def greedy(self, s: int) -> int:
        """Argmax over legal actions; ties go to the lowest action index."""
        row = self.values[s]
        best = -1
        best_v = -np.inf
        for a in self._legal_lists[s]:
            v = row[a]
            if v > best_v:
                best, best_v = a, v
        return best

    def max_value(self, s: int) -> float:
        row = self.values[s]
        return max(row[a] for a in self._legal_lists[s])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, QTable) and np.array_equal(self.values, other.values)


def _sidx(state) -> int:
    return state.index if isinstance(state, TraderState) else int(state)


def q_update(
    table: QTable,
    state,
    action,
    reward: float,
    next_state,
    alpha: float,
    gamma: float,
    terminal: bool = False,
) -> float:
    """Q(s,a) += alpha * (r + gamma * max_legal Q(s',.) - Q(s,a)). Returns the TD error."""
    s, a = _sidx(state), int(action)
    if not table.legal[s, a]:
        raise ValueError(f"update of illegal cell (state {s}, action {a})")
    target = reward if terminal else reward + gamma * table.max_value(_sidx(next_state))
    td = target - table.values[s, a]
    table.values[s, a] += alpha * td
    return td


def q_update_tuple(table: QTable, tup: ExperienceTuple, alpha: float, gamma: float) -> float:
    return q_update(table, tup.state, tup.action, tup.reward, tup.next_state, alpha, gamma)


def epsilon_greedy(table: QTable, state, epsilon: float, rng: np.random.Generator) -> int:
    s = _sidx(state)
    if rng.random() < epsilon:
        legal = table.legal_actions(s)
        return legal[int(rng.integers(len(legal)))]
    return table.greedy(s)


def accumulated_return(rewards: Iterable[float], gamma: float) -> float:
    total = 0.0
    discount = 1.0
    for r in rewards:
        total += discount * r
        discount *= gamma
    return total


@dataclass(frozen=True)
class LearningParams:
    gamma: float = 0.98
    alpha0: float = 0.99
    alpha_decay: float = 0.999
    epsilon0: float = 0.999
    epsilon_decay: float = 0.9995
    episodes: int = 200

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not (0.0 < self.alpha0 <= 1.0 and 0.0 < self.epsilon0 <= 1.0):
            raise ValueError("alpha0 and epsilon0 must be in (0, 1]")
        if not (0.0 < self.alpha_decay <= 1.0 and 0.0 < self.epsilon_decay <= 1.0):
            raise ValueError("decay factors must be in (0, 1]")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")

    def alpha_at(self, step: int) -> float:
        return self.alpha0 * self.alpha_decay**step

    def epsilon_at(self, step: int) -> float:
        return self.epsilon0 * self.epsilon_decay**step


class Policy:
    """Greedy policy frozen from a Q-table."""

    def __init__(self, table: QTable, name: str = "") -> None:
        self.table = table.copy()
        self.name = name
        self._actions = [table.greedy(s) for s in range(table.values.shape[0])]

    def __call__(self, state) -> int:
        return self._actions[_sidx(state)]

    @property
    def actions(self) -> List[int]:
        return list(self._actions)


class QLearner:
    """Q-learning controller. ``steps`` counts learner decisions and drives
    both decay schedules; it carries over between episodes."""

    def __init__(
        self,
        table: Optional[QTable] = None,
        params: LearningParams = LearningParams(),
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.table = table if table is not None else QTable()
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.steps = 0
        self.greedy_only = False

    @property
    def alpha(self) -> float:
        return self.params.alpha_at(self.steps)

    @property
    def epsilon(self) -> float:
        return self.params.epsilon_at(self.steps)

    def act(self, state) -> int:
        eps = 0.0 if self.greedy_only else self.epsilon
        return epsilon_greedy(self.table, state, eps, self.rng)

    def observe(self, state, action, reward: float, next_state, terminal: bool = False) -> None:
        q_update(self.table, state, action, reward, next_state, self.alpha, self.params.gamma, terminal)
        self.steps += 1


# -- training on the simulator ---------------------------------------------


@dataclass
class TrainResult:
    table: QTable
    episode_rewards: List[float]
    tuples: List[Tuple[int, int, ExperienceTuple]] = field(default_factory=list)
    steps: int = 0

    @property
    def policy(self) -> Policy:
        return Policy(self.table)


def learner_stream(seed: int) -> np.random.Generator:
    return stream(seed, 7, 1)


def episode_seed(seed: int, episode: int) -> int:
    return derive_seed(seed, 7, 2, episode)


def train(
    scenario: ScenarioConfig,
    params: LearningParams = LearningParams(),
    seed: int = 0,
    episodes: Optional[int] = None,
    learner: Optional[QLearner] = None,
    keep_tuples: bool = True,
    on_episode: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Q-learning over ``episodes`` simulated days (defaults to ``params.episodes``)."""
    from .simulation import run_episode

    if scenario.q_learner != 1:
        raise ValueError(f"scenario {scenario.name} has no learner")
    n = params.episodes if episodes is None else episodes
    if learner is None:
        learner = QLearner(QTable(), params, learner_stream(seed))
    rewards: List[float] = []
    log: List[Tuple[int, int, ExperienceTuple]] = []
    for e in range(n):
        record = run_episode(scenario, episode_seed(seed, e), controller=learner)
        rewards.append(record.learner_reward)
        if keep_tuples:
            log.extend((e, k, t) for k, t in enumerate(record.tuples))
        if on_episode is not None:
            on_episode(e, record.learner_reward)
    return TrainResult(learner.table, rewards, log, learner.steps)


# -- generic episodic environments (used for small test MDPs) ---------------


def run_q_learning(
    reset: Callable[[], int],
    step: Callable[[int, int], Tuple[float, int, bool]],
    table: QTable,
    params: LearningParams,
    episodes: int,
    rng: np.random.Generator,
    max_steps: int = 100,
) -> List[float]:
    """Pull-style loop: ``step(s, a) -> (reward, s', done)``. Returns episode returns."""
    learner = QLearner(table, params, rng)
    returns = []
    for _ in range(episodes):
        s = reset()
        total = 0.0
        for _ in range(max_steps):
            a = learner.act(s)
            r, s2, done = step(s, a)
            learner.observe(s, a, r, s2, terminal=done)
            total += r
            s = s2
            if done:
                break
        returns.append(total)
    return returns


def value_iteration(
    n_states: int,
    n_actions: int,
    transition: Callable[[int, int], Tuple[float, int, bool]],
    gamma: float,
    tol: float = 1e-14,
    max_iter: int = 100_000,
    terminal_states: Sequence[int] = (),
) -> np.ndarray:
    """Q* for a deterministic MDP given ``transition(s, a) -> (r, s', done)``."""
    q = np.zeros((n_states, n_actions))
    for _ in range(max_iter):
        new = np.zeros_like(q)
        for s in range(n_states):
            if s in terminal_states:
                continue
            for a in range(n_actions):
                r, s2, done = transition(s, a)
                new[s, a] = r if done else r + gamma * q[s2].max()
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q


def qtable_rows(table: QTable) -> List[Tuple[int, int, float]]:
    rows = []
    for s in range(table.values.shape[0]):
        for a in table.legal_actions(s):
            rows.append((s, a, float(table.values[s, a])))
    return rows

