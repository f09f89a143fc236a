"""Binary RBM trained by CD-1, used as a structural probe between scenarios.

An RBM is fit to the experience tuples of one scenario; its mean-field
reconstruction error on another scenario's tuples is the distance.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from .agents import N_BUCKETS, Action, ExperienceTuple, Position, TraderState
from .distance import DistanceMatrix

# visible layout: bucket(7) | position(3) | action(3) | reward sign(1) + thermometer(3) | next bucket(7) | next position(3)
REWARD_THRESHOLDS = (1.0, 10.0, 100.0)
GROUPS = (
    ("bucket", 0, N_BUCKETS),
    ("position", 7, 3),
    ("action", 10, 3),
    ("reward", 13, 4),
    ("next_bucket", 17, N_BUCKETS),
    ("next_position", 24, 3),
)
N_VISIBLE = 27


def _reward_code(reward: float) -> Tuple[int, int]:
    level = sum(1 for t in REWARD_THRESHOLDS if abs(reward) >= t)
    return (1 if reward > 0 else 0), level


def _reward_value(sign: int, level: int) -> float:
    if level == 0:
        return 0.5 if sign else 0.0
    mag = REWARD_THRESHOLDS[level - 1]
    return mag if sign else -mag


def encode_tuple(t: ExperienceTuple) -> np.ndarray:
    v = np.zeros(N_VISIBLE)
    v[0 + t.state.bucket] = 1
    v[7 + int(t.state.position) + 1] = 1
    v[10 + int(t.action)] = 1
    sign, level = _reward_code(t.reward)
    v[13] = sign
    v[14 : 14 + level] = 1
    v[17 + t.next_state.bucket] = 1
    v[24 + int(t.next_state.position) + 1] = 1
    return v


def encode_tuples(tuples: Sequence[ExperienceTuple]) -> np.ndarray:
    if len(tuples) == 0:
        return np.zeros((0, N_VISIBLE))
    return np.stack([encode_tuple(t) for t in tuples])


def decode_vector(v: Sequence[float]) -> ExperienceTuple:
    """Inverse of :func:`encode_tuple`; the reward comes back as the
    representative of its (sign, magnitude) class."""
    v = np.asarray(v)
    bucket = int(np.argmax(v[0:7]))
    pos = Position(int(np.argmax(v[7:10])) - 1)
    action = Action(int(np.argmax(v[10:13])))
    sign = int(v[13])
    level = int(v[14:17].sum())
    nb = int(np.argmax(v[17:24]))
    npos = Position(int(np.argmax(v[24:27])) - 1)
    return ExperienceTuple(TraderState(bucket, pos), action, _reward_value(sign, level), TraderState(nb, npos))


def canonical_reward(reward: float) -> float:
    return _reward_value(*_reward_code(reward))


@dataclass
class RbmModel:
    W: np.ndarray  # (n_hidden, n_visible)
    b: np.ndarray  # visible biases
    c: np.ndarray  # hidden biases

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.W.shape != (self.c.size, self.b.size):
            raise ValueError(f"W shape {self.W.shape} does not match ({self.c.size}, {self.b.size})")

    @property
    def n_visible(self) -> int:
        return self.b.size

    @property
    def n_hidden(self) -> int:
        return self.c.size

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "RbmModel":
        return cls(np.zeros((n_hidden, n_visible)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, rng: np.random.Generator, scale: float = 0.01) -> "RbmModel":
        return cls(rng.normal(0.0, scale, (n_hidden, n_visible)), np.zeros(n_visible), np.zeros(n_hidden))

    def copy(self) -> "RbmModel":
        return RbmModel(self.W.copy(), self.b.copy(), self.c.copy())

    def to_text(self) -> str:
        lines = [f"# rbm n_hidden={self.n_hidden} n_visible={self.n_visible}", "# W"]
        lines += [" ".join(repr(float(x)) for x in row) for row in self.W]
        lines += ["# b", " ".join(repr(float(x)) for x in self.b)]
        lines += ["# c", " ".join(repr(float(x)) for x in self.c)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RbmModel":
        sections, current = {}, None
        header = None
        for line in text.splitlines():
            if line.startswith("# rbm"):
                header = dict(kv.split("=") for kv in line.split()[2:])
            elif line.startswith("# "):
                current = line[2:].strip()
                sections[current] = []
            elif line.strip():
                sections[current].append([float(x) for x in line.split()])
        W = np.array(sections["W"])
        model = cls(W, np.array(sections["b"][0]), np.array(sections["c"][0]))
        if header and (int(header["n_hidden"]), int(header["n_visible"])) != W.shape:
            raise ValueError("model dump header disagrees with the weight matrix")
        return model


def _check_visible(model: RbmModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.n_visible:
        raise ValueError(f"expected {model.n_visible} visible units, got {v.shape[-1]}")
    return v


def hidden_activation(model: RbmModel, v) -> np.ndarray:
    v = _check_visible(model, v)
    return expit(v @ model.W.T + model.c)


def visible_reconstruction(model: RbmModel, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != model.n_hidden:
        raise ValueError(f"expected {model.n_hidden} hidden units, got {h.shape[-1]}")
    return expit(h @ model.W + model.b)


def cd1_direction(model: RbmModel, batch: np.ndarray, rng: np.random.Generator):
    """Batch-averaged CD-1 estimate of the log-likelihood gradient: (dW, db, dc)."""
    v0 = _check_visible(model, np.atleast_2d(batch))
    ph0 = hidden_activation(model, v0)
    h0 = (rng.random(ph0.shape) < ph0).astype(float)
    pv1 = visible_reconstruction(model, h0)
    ph1 = hidden_activation(model, pv1)
    n = v0.shape[0]
    dW = (ph0.T @ v0 - ph1.T @ pv1) / n
    db = (v0 - pv1).sum(axis=0) / n
    dc = (ph0 - ph1).sum(axis=0) / n
    return dW, db, dc


def cd1_update(model: RbmModel, batch, lr: float, rng: np.random.Generator) -> RbmModel:
    dW, db, dc = cd1_direction(model, batch, rng)
    model.W += lr * dW
    model.b += lr * db
    model.c += lr * dc
    return model


def reconstruct(model: RbmModel, vectors) -> np.ndarray:
    """Deterministic mean-field reconstruction: v -> p(h|v) -> p(v|h)."""
    return visible_reconstruction(model, hidden_activation(model, vectors))


def reconstruction_mse(model: RbmModel, vectors) -> float:
    v = _check_visible(model, np.atleast_2d(vectors))
    if v.shape[0] == 0:
        raise ValueError("reconstruction_mse needs at least one vector")
    err = v - reconstruct(model, v)
    return float(np.mean(err * err))


def free_energy(model: RbmModel, v) -> np.ndarray | float:
    """F(v) = -b.v - sum_j softplus(c_j + W_j.v)."""
    v = _check_visible(model, v)
    pre = v @ model.W.T + model.c
    out = -(v @ model.b) - np.logaddexp(0.0, pre).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def free_energy_grad_W(model: RbmModel, v) -> np.ndarray:
    v = _check_visible(model, v)
    return -np.outer(hidden_activation(model, v), v)


def all_visible_states(n_visible: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=n_visible)))


def log_partition(model: RbmModel) -> float:
    if model.n_visible > 20:
        raise ValueError("exact partition function is only for tiny models")
    return float(logsumexp(-free_energy(model, all_visible_states(model.n_visible))))


def log_likelihood(model: RbmModel, data) -> float:
    """Exact mean log p(v) over ``data`` by enumerating every visible state."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return float(np.mean(-free_energy(model, data)) - log_partition(model))


def exact_gradient(model: RbmModel, data):
    """Exact gradient of the mean log-likelihood: (dW, db, dc)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    states = all_visible_states(model.n_visible)
    logp = -free_energy(model, states)
    p = np.exp(logp - logsumexp(logp))
    ph_data = hidden_activation(model, data)
    ph_all = hidden_activation(model, states)
    dW = ph_data.T @ data / len(data) - (ph_all * p[:, None]).T @ states
    db = data.mean(axis=0) - p @ states
    dc = ph_data.mean(axis=0) - p @ ph_all
    return dW, db, dc


@dataclass(frozen=True)
class CdParams:
    n_hidden: int = 16
    learning_rate: float = 0.05
    cd_steps: int = 1
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self) -> None:
        if min(self.n_hidden, self.epochs, self.batch_size, self.cd_steps) <= 0 or self.learning_rate <= 0:
            raise ValueError("CD parameters must be positive")
        if self.cd_steps != 1:
            raise ValueError("only CD-1 is implemented")


def train_rbm(data, params: CdParams = CdParams(), model: Optional[RbmModel] = None, on_epoch=None) -> RbmModel:
    """Minibatch CD-1; the data order is reshuffled each epoch from ``params.seed``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    rng = np.random.default_rng(params.seed)
    if model is None:
        model = RbmModel.random(data.shape[1], params.n_hidden, rng, params.init_scale)
    n = data.shape[0]
    for epoch in range(params.epochs):
        order = rng.permutation(n)
        for start in range(0, n, params.batch_size):
            cd1_update(model, data[order[start : start + params.batch_size]], params.learning_rate, rng)
        if on_epoch is not None:
            on_epoch(epoch, model)
    return model


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@dataclass
class RbmDistances:
    raw: DistanceMatrix
    normalized: DistanceMatrix
    models: dict


def rbm_distance_matrix(
    tuple_sets: Mapping[str, np.ndarray],
    params: CdParams = CdParams(),
    min_tuples: int = 1000,
) -> RbmDistances:
    """Entry (i, j): reconstruction MSE of scenario j's tuples under the RBM trained on i.

    ``tuple_sets`` maps labels to encoded (n, 27) arrays. The matrix is
    not symmetrized; the normalized form is min-max scaled over all
    entries.
    """
    labels = list(tuple_sets)
    for label in labels:
        if len(tuple_sets[label]) < min_tuples:
            raise ValueError(f"{label}: {len(tuple_sets[label])} tuples, need at least {min_tuples}")
    models = {label: train_rbm(tuple_sets[label], params) for label in labels}
    n = len(labels)
    raw = np.zeros((n, n))
    for i, li in enumerate(labels):
        for j, lj in enumerate(labels):
            raw[i, j] = reconstruction_mse(models[li], tuple_sets[lj])
    return RbmDistances(DistanceMatrix(raw, labels), DistanceMatrix(min_max_normalize(raw), labels), models)
