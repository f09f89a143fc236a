"""Policy reuse: pi-reuse exploration, reuse gain, and PRQ-Learning.

Every episode index ``e`` of a run maps to the same simulated market day
(:func:`lobtransfer.rl.episode_seed`) whichever algorithm runs it, so
Q-learning, pi-reuse and PRQ comparisons under one seed are paired.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .agents import Action, TraderState, legal_actions
from .config import ScenarioConfig
from .kernel import stream
from .rl import LearningParams, Policy, QLearner, QTable, epsilon_greedy, episode_seed, learner_stream


@dataclass(frozen=True)
class PiReuseParams:
    psi0: float = 1.0
    psi_decay: float = 0.99
    episodes: int = 20
    horizon: Optional[int] = None  # max decisions per episode; None runs to the close

    def __post_init__(self) -> None:
        if not 0.0 < self.psi0 <= 1.0 or not 0.0 < self.psi_decay <= 1.0:
            raise ValueError("psi0 and psi_decay must be in (0, 1]")

    def psi_at(self, step: int) -> float:
        return self.psi0 * self.psi_decay**step


def pi_reuse_choice(
    past: Policy,
    table: QTable,
    state: TraderState,
    psi: float,
    epsilon: float,
    rng: np.random.Generator,
) -> Tuple[int, bool]:
    """(action, True if the past-policy branch fired).

    A past-policy action that is illegal in ``state`` becomes HOLD.
    """
    if rng.random() < psi:
        a = past(state)
        if Action(a) not in legal_actions(state):
            a = int(Action.HOLD)
        return a, True
    return epsilon_greedy(table, state, epsilon, rng), False


def pi_reuse_action(past, table, state, psi, epsilon, rng) -> int:
    return pi_reuse_choice(past, table, state, psi, epsilon, rng)[0]


class PiReuseController:
    """Drives one pi-reuse episode on top of a shared :class:`QLearner`.

    psi restarts at ``psi0`` each episode and decays per decision; the
    epsilon and alpha schedules belong to the learner and keep running.
    All executed transitions update the learner's Q-table.
    """

    def __init__(self, past: Policy, learner: QLearner, params: PiReuseParams = PiReuseParams()) -> None:
        self.past = past
        self.learner = learner
        self.params = params
        self.step = 0
        self.past_branch = 0
        self.actions: List[int] = []

    @property
    def psi(self) -> float:
        return self.params.psi_at(self.step)

    def act(self, state: TraderState) -> int:
        if self.params.horizon is not None and self.step >= self.params.horizon:
            a = self.learner.table.greedy(state.index)
        else:
            a, used = pi_reuse_choice(
                self.past, self.learner.table, state, self.psi, self.learner.epsilon, self.learner.rng
            )
            self.past_branch += used
        self.step += 1
        self.actions.append(a)
        return a

    def observe(self, state, action, reward, next_state) -> None:
        self.learner.observe(state, action, reward, next_state)


class GreedyController:
    """Follows the learner's greedy policy (epsilon = 0) while still learning."""

    def __init__(self, learner: QLearner, learn: bool = True) -> None:
        self.learner = learner
        self.learn = learn
        self.actions: List[int] = []

    def act(self, state: TraderState) -> int:
        a = self.learner.table.greedy(state.index)
        self.actions.append(a)
        return a

    def observe(self, state, action, reward, next_state) -> None:
        if self.learn:
            self.learner.observe(state, action, reward, next_state)


class PolicyController:
    """Executes a fixed policy without learning."""

    def __init__(self, policy: Policy) -> None:
        self.policy = policy
        self.actions: List[int] = []

    def act(self, state: TraderState) -> int:
        a = self.policy(state)
        if Action(a) not in legal_actions(state):
            a = int(Action.HOLD)
        self.actions.append(a)
        return a

    def observe(self, state, action, reward, next_state) -> None:
        pass


def pi_reuse_episode(
    past: Policy,
    learner: QLearner,
    scenario: ScenarioConfig,
    params: PiReuseParams = PiReuseParams(),
    seed: int = 0,
) -> Tuple[float, PiReuseController]:
    """One simulated day under pi-reuse. Returns (undiscounted reward, controller)."""
    from .simulation import run_episode

    controller = PiReuseController(past, learner, params)
    record = run_episode(scenario, seed, controller=controller)
    return record.learner_reward, controller


def pi_reuse_learn(
    past: Policy,
    scenario: ScenarioConfig,
    episodes: int,
    seed: int = 0,
    params: PiReuseParams = PiReuseParams(),
    learning: LearningParams = LearningParams(),
    learner: Optional[QLearner] = None,
) -> Tuple[List[float], QLearner]:
    """``episodes`` pi-reuse episodes from a zero Q-table (unless ``learner`` is given)."""
    if learner is None:
        learner = QLearner(QTable(), learning, learner_stream(seed))
    rewards = []
    for e in range(episodes):
        r, _ = pi_reuse_episode(past, learner, scenario, params, episode_seed(seed, e))
        rewards.append(r)
    return rewards, learner


def reuse_gain(
    past: Policy,
    scenario: ScenarioConfig,
    episodes: int = 20,
    seed: int = 0,
    params: PiReuseParams = PiReuseParams(),
    learning: LearningParams = LearningParams(),
) -> float:
    """Mean episode reward over ``episodes`` pi-reuse episodes starting from zero Q."""
    if episodes < 1:
        raise ValueError("reuse_gain needs at least one episode")
    rewards, _ = pi_reuse_learn(past, scenario, episodes, seed, params, learning)
    return float(np.mean(rewards))


def greedy_return(policy: Policy, scenario: ScenarioConfig, episodes: int, seed: int = 0) -> List[float]:
    """Rewards of a fixed policy followed fully greedily (no exploration, no learning)."""
    from .simulation import run_episode

    return [run_episode(scenario, episode_seed(seed, e), controller=PolicyController(policy)).learner_reward
            for e in range(episodes)]


# -- PRQ-Learning ------------------------------------------------------------


def selection_probabilities(gains: Sequence[float], temperature: float) -> np.ndarray:
    """Softmax P_j = exp(tau W_j) / sum_p exp(tau W_p), shifted by the max for stability."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    x = temperature * np.asarray(gains, dtype=float)
    x = x - x.max()
    e = np.exp(x)
    return e / e.sum()


def prq_select_policy(gains: Sequence[float], temperature: float, rng: np.random.Generator) -> int:
    p = selection_probabilities(gains, temperature)
    j = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return min(j, len(p) - 1)


@dataclass(frozen=True)
class PrqParams:
    tau_max: float = 0.002
    tau_mid: Optional[float] = None  # default episodes / 2
    tau_scale: Optional[float] = None  # default episodes / 10
    reuse: PiReuseParams = field(default_factory=PiReuseParams)

    def temperature(self, episode: int, episodes: int) -> float:
        mid = episodes / 2 if self.tau_mid is None else self.tau_mid
        scale = max(episodes / 10, 1e-12) if self.tau_scale is None else self.tau_scale
        z = (episode - mid) / scale
        return float(self.tau_max / (1.0 + np.exp(-z)))


@dataclass
class PolicyLibrary:
    """Past policies plus the ongoing one at index 0, with reuse-gain estimates."""

    policies: List[Policy]
    gains: np.ndarray = None
    uses: np.ndarray = None

    def __post_init__(self) -> None:
        n = len(self.policies) + 1
        if self.gains is None:
            self.gains = np.zeros(n)
        if self.uses is None:
            self.uses = np.zeros(n, dtype=int)

    def __len__(self) -> int:
        return len(self.policies) + 1

    def record(self, j: int, reward: float) -> None:
        """Incremental mean: W_j <- (W_j U_j + reward) / (U_j + 1)."""
        u = self.uses[j]
        self.gains[j] = (self.gains[j] * u + reward) / (u + 1)
        self.uses[j] = u + 1


@dataclass
class PrqResult:
    table: QTable
    rewards: List[float]
    selected: List[int]
    gains: np.ndarray  # (episodes, n+1), after each episode's update
    probabilities: np.ndarray  # (episodes, n+1), used for each episode's draw
    temperatures: List[float]
    library: PolicyLibrary


def prq_learn(
    library: Sequence[Policy] | PolicyLibrary,
    scenario: ScenarioConfig,
    episodes: int,
    seed: int = 0,
    params: PrqParams = PrqParams(),
    learning: LearningParams = LearningParams(),
) -> PrqResult:
    """PRQ-Learning on ``scenario``. Index 0 is the ongoing policy (greedy
    episodes); index i >= 1 runs a pi-reuse episode with past policy i."""
    from .simulation import run_episode

    lib = library if isinstance(library, PolicyLibrary) else PolicyLibrary(list(library))
    if len(lib.policies) == 0:
        raise ValueError("prq_learn needs a nonempty policy library")
    learner = QLearner(QTable(), learning, learner_stream(seed))
    select_rng = stream(seed, 7, 3)
    rewards, selected, temps = [], [], []
    gains = np.zeros((episodes, len(lib)))
    probs = np.zeros((episodes, len(lib)))
    for e in range(episodes):
        tau = params.temperature(e, episodes)
        p = selection_probabilities(lib.gains, tau)
        j = min(int(np.searchsorted(np.cumsum(p), select_rng.random(), side="right")), len(p) - 1)
        if j == 0:
            controller = GreedyController(learner)
        else:
            controller = PiReuseController(lib.policies[j - 1], learner, params.reuse)
        reward = run_episode(scenario, episode_seed(seed, e), controller=controller).learner_reward
        lib.record(j, reward)
        rewards.append(reward)
        selected.append(j)
        temps.append(tau)
        gains[e] = lib.gains
        probs[e] = p
    return PrqResult(learner.table, rewards, selected, gains, probs, temps, lib)
