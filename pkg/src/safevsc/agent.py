"""DQN switching-policy agent: epsilon-greedy proposals, replay memory, target network."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import neural
from .plant import PlantParams, PlantState, SwitchAction, inverter_voltage
from .signals import AlphaBeta

N_ACTIONS = 7


@dataclass
class AgentConfig:
    """Learning hyperparameters; epsilon decays linearly per episode."""

    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.02
    eps_decay_episodes: int = 50
    replay_capacity: int = 100_000
    batch_size: int = 64
    target_sync_period: int = 500
    learn_start: int = 1000
    hidden_sizes: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    # Optional linear decay of the Adam step size over the training episodes;
    # None keeps learning_rate constant.
    learning_rate_end: float | None = None
    optimizer: str = "adam"
    # Q values are regressed in units of value_scale to keep targets O(1);
    # reported Q values and losses are in true reward units.
    value_scale: float = 4.0e4
    prev_action_one_hot: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        for eps in (self.eps_start, self.eps_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon values must be in [0, 1]")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size must not exceed replay capacity")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")

    @property
    def feature_dim(self) -> int:
        return 6 + (N_ACTIONS if self.prev_action_one_hot else 2)


def epsilon_at(cfg: AgentConfig, episode: int) -> float:
    """Linear exploration schedule over episodes."""
    if cfg.eps_decay_episodes <= 0:
        return cfg.eps_end
    frac = min(1.0, max(0.0, episode / cfg.eps_decay_episodes))
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def learning_rate_at(cfg: AgentConfig, episode: int, total_episodes: int) -> float:
    """Linear step-size schedule over the whole run; constant when no end is set."""
    if cfg.learning_rate_end is None or total_episodes <= 1:
        return cfg.learning_rate
    frac = min(1.0, max(0.0, episode / (total_episodes - 1)))
    return cfg.learning_rate + (cfg.learning_rate_end - cfg.learning_rate) * frac


def encode_state(
    ps: PlantState,
    ref: AlphaBeta,
    prev: SwitchAction,
    p: PlantParams,
    i_max: float = 20.0,
    one_hot: bool = False,
) -> np.ndarray:
    """Feature vector [v*_a, v*_b, dv_a, dv_b, i_a, i_b, prev...].

    Voltages are normalized by v_dc and currents by i_max. The previous action
    enters as its normalized alpha-beta inverter voltage (2 features) or,
    optionally, as a 7-way one-hot.
    """
    vdc = p.v_dc
    base = [
        ref.alpha / vdc,
        ref.beta / vdc,
        (ref.alpha - ps.v_f.alpha) / vdc,
        (ref.beta - ps.v_f.beta) / vdc,
        ps.i_f.alpha / i_max,
        ps.i_f.beta / i_max,
    ]
    if one_hot:
        tail = [0.0] * N_ACTIONS
        tail[prev.index - 1] = 1.0
    else:
        v_prev = inverter_voltage(prev, vdc)
        tail = [v_prev.alpha / vdc, v_prev.beta / vdc]
    return np.array(base + tail)


def reward(ref: AlphaBeta, v_f: AlphaBeta) -> float:
    """Negated squared voltage tracking error; always <= 0."""
    ea = ref.alpha - v_f.alpha
    eb = ref.beta - v_f.beta
    return -(ea * ea + eb * eb)


def select_action(q: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Greedy action index 1..7 with probability 1-eps, else uniform random."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    if eps > 0.0 and rng.random() < eps:
        return int(rng.integers(1, N_ACTIONS + 1))
    return int(np.argmax(q)) + 1


class Transition(NamedTuple):
    """One (s, a, r, s', done) tuple; a is the executed action index 1..7."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class ReplayMemory:
    """Fixed-capacity ring buffer with minibatch sampling without replacement."""

    def __init__(self, capacity: int, feature_dim: int):
        self.capacity = capacity
        self._s = np.zeros((capacity, feature_dim))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._s_next = np.zeros((capacity, feature_dim))
        self._done = np.zeros(capacity, dtype=bool)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, s: np.ndarray, a: int, r: float, s_next: np.ndarray, done: bool) -> None:
        k = self._pos
        self._s[k] = s
        self._a[k] = a
        self._r[k] = r
        self._s_next[k] = s_next
        self._done[k] = done
        self._pos = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(
        self, rng: np.random.Generator, batch_size: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        idx = rng.choice(self._size, size=batch_size, replace=False, shuffle=False)
        return (self._s[idx], self._a[idx], self._r[idx], self._s_next[idx], self._done[idx])


def td_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    dones: np.ndarray,
    target_params: neural.MlpParams,
    gamma: float,
    value_scale: float = 1.0,
) -> np.ndarray:
    """Per-sample targets y = r on termination, else r + gamma * max_a' Q'(s', a')."""
    q_next = value_scale * neural.forward(target_params, next_states)
    return np.asarray(rewards) + gamma * q_next.max(axis=1) * (~np.asarray(dones, dtype=bool))


class DqnAgent:
    """Online network, target network, replay memory and the optimizer glued together."""

    def __init__(self, cfg: AgentConfig):
        self.cfg = cfg
        sizes = (cfg.feature_dim,) + tuple(cfg.hidden_sizes) + (N_ACTIONS,)
        self.net = neural.init_network(sizes, cfg.seed)
        self.target = self.net.copy()
        self.opt = neural.AdamState(self.net, lr=cfg.learning_rate)
        self.replay = ReplayMemory(cfg.replay_capacity, cfg.feature_dim)
        self.learn_steps = 0
        self.episodes_trained = 0

    def q_values(self, features: np.ndarray) -> np.ndarray:
        """True-unit Q values for one encoded state."""
        return self.cfg.value_scale * neural.forward(self.net, features)

    def propose(self, features: np.ndarray, eps: float, rng: np.random.Generator) -> int:
        return select_action(self.q_values(features), eps, rng)

    def remember(self, s: np.ndarray, a: int, r: float, s_next: np.ndarray, done: bool) -> None:
        self.replay.push(s, a, r, s_next, done)

    def learn(self, rng: np.random.Generator) -> float | None:
        """One minibatch update; returns the TD loss, or None during warmup."""
        cfg = self.cfg
        if len(self.replay) < max(cfg.batch_size, cfg.learn_start):
            return None
        s, a, r, s_next, done = self.replay.sample(rng, cfg.batch_size)
        y = td_targets(r, s_next, done, self.target, cfg.gamma, cfg.value_scale)
        grads, loss = neural.backward_td(self.net, s, a - 1, y / cfg.value_scale)
        if cfg.optimizer == "adam":
            neural.adam_step(self.net, grads, self.opt)
        else:
            neural.sgd_step(self.net, grads, cfg.learning_rate)
        self.learn_steps += 1
        if self.learn_steps % cfg.target_sync_period == 0:
            self.target = self.net.copy()
        return loss * cfg.value_scale**2

    # Checkpointing: binary parameter file plus a JSON sidecar with the config.

    def save(self, params_path: str | Path, sidecar_path: str | Path | None = None) -> None:
        counters = {"learn_steps": self.learn_steps, "episodes_trained": self.episodes_trained}
        neural.save_params(params_path, self.net, seed=self.cfg.seed, counters=counters)
        if sidecar_path is None:
            sidecar_path = Path(params_path).with_suffix(".json")
        sidecar = {
            "format_version": neural.FORMAT_VERSION,
            "agent_config": asdict(self.cfg),
            "counters": counters,
        }
        Path(sidecar_path).write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, params_path: str | Path, sidecar_path: str | Path | None = None) -> "DqnAgent":
        params, header = neural.load_params(params_path)
        if sidecar_path is None:
            sidecar_path = Path(params_path).with_suffix(".json")
        sidecar = json.loads(Path(sidecar_path).read_text())
        raw = dict(sidecar["agent_config"])
        raw["hidden_sizes"] = tuple(raw["hidden_sizes"])
        agent = cls(AgentConfig(**raw))
        agent.net = params
        agent.target = params.copy()
        counters = header.get("counters", {})
        agent.learn_steps = int(counters.get("learn_steps", 0))
        agent.episodes_trained = int(counters.get("episodes_trained", 0))
        return agent
