"""Dyna-Q training: epsilon-greedy rollouts in the single-agent environment,
a direct Q-learning step per transition, and planning passes (replayed
mini-batches followed by a soft target update) every ``planning_interval``
steps and at the end of every episode.

A lookup-table variant on the discretised room (``train_tabular``) applies
the tabular Q-learning rule literally and serves as a check against value
iteration.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .geometry import Scenario, sample_initial_positions
from .gridworld import GridModel
from .physics import N_ACTIONS, IntegrationError, PhysicsParams, SingleAgentEnv
from .qnet import (
    AdamState,
    Batch,
    NetConfig,
    NetworkParams,
    _forward_cache,
    adam_update,
    he_init,
    normalize_observation,
    save_params,
    soft_update,
    td_loss_and_gradient,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayMemory:
    """Fixed-capacity FIFO ring buffer of transitions."""

    def __init__(self, capacity: int = 50_000, state_size: int = 4):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_size))
        self.dones = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state, done: bool) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def add(self, t: Transition) -> None:
        self.push(t.state, t.action, t.reward, t.next_state, t.done)

    def _order(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                           self.next_states[i].copy(), bool(self.dones[i])) for i in self._order()]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform mini-batch without replacement."""
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx])


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 1000
    max_steps: int = 10_000
    gamma: float = 0.999
    mu: float = 0.1
    epsilon_high: float = 1.0
    epsilon_low: float = 0.1
    p_fraction: float = 0.5
    batch_size: int = 32
    planning_updates: int = 5       # mini-batch steps per planning pass
    learning_rate: float = 1e-4
    memory_capacity: int = 50_000
    replay_gate: int | None = None
    planning_interval: int = 50     # steps between in-episode planning passes, 0 = episode end only
    seed: int = 0

    def __post_init__(self):
        if self.planning_interval < 0:
            raise ValueError("planning_interval must be >= 0")
        if not 0 <= self.epsilon_low <= self.epsilon_high <= 1:
            raise ValueError("need 0 <= epsilon_low <= epsilon_high <= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.mu <= 1:
            raise ValueError("mu must be in [0, 1]")
        if self.episodes < 0 or self.max_steps < 1 or self.batch_size < 1:
            raise ValueError("episodes >= 0, max_steps >= 1 and batch_size >= 1 required")
        if not self.p_fraction > 0:
            raise ValueError("p_fraction must be positive")

    @property
    def gate(self) -> int:
        """Memory size at which replay starts."""
        if self.replay_gate is not None:
            return max(self.replay_gate, self.batch_size)
        return max(min(self.memory_capacity, 10 * self.batch_size), self.batch_size)


def epsilon_at(ep: int, cfg: TrainConfig) -> float:
    """Exploration rate for episode ``ep`` of ``cfg.episodes``."""
    frac = ep / cfg.episodes if cfg.episodes > 0 else 0.0
    return cfg.epsilon_low + (cfg.epsilon_high - cfg.epsilon_low) * math.exp(-(4.0 / cfg.p_fraction) * frac)


def greedy_action(q: np.ndarray) -> int:
    return int(np.argmax(q))


def select_action(params: NetworkParams, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the 8 Q-values; greedy ties go to the lowest index."""
    return _epsilon_greedy(_forward_cache(params, np.asarray(state, float)[None])[-1][0], epsilon, rng)


def _epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q))


def direct_q_update(
    train: NetworkParams,
    target: NetworkParams,
    adam: AdamState,
    transition: Transition,
    gamma: float,
    *,
    grad_buf: NetworkParams | None = None,
    train_acts: list[np.ndarray] | None = None,
) -> float:
    """One optimizer step on the single-transition TD loss; returns the loss."""
    t = transition
    batch = Batch(np.asarray(t.state, float)[None], np.array([t.action]), np.array([t.reward], float),
                  np.asarray(t.next_state, float)[None], np.array([t.done]))
    loss, grad = td_loss_and_gradient(train, target, batch, gamma, out=grad_buf, train_acts=train_acts)
    adam_update(train, adam, grad)
    return loss


def planning_replay(
    train: NetworkParams,
    target: NetworkParams,
    adam: AdamState,
    memory: ReplayMemory,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[NetworkParams, float | None]:
    """Replay mini-batches from memory, then soft-update the target.

    ``train`` and ``adam`` are updated in place. Returns the new target
    network and the mean replay loss; below the replay gate nothing happens
    and ``(target, None)`` is returned.
    """
    if len(memory) < cfg.gate or len(memory) < cfg.batch_size:
        return target, None
    buf = train.zeros_like()
    losses = []
    for _ in range(cfg.planning_updates):
        batch = memory.sample(cfg.batch_size, rng)
        loss, grad = td_loss_and_gradient(train, target, batch, cfg.gamma, out=buf)
        adam_update(train, adam, grad)
        losses.append(loss)
    return soft_update(target, train, cfg.mu), (float(np.mean(losses)) if losses else None)


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    epsilon: float
    mean_loss: float
    evacuated: bool


TRAIN_LOG_HEADER = ("episode", "steps", "epsilon", "mean_loss", "evacuated")


@dataclass
class TrainResult:
    params: NetworkParams
    target: NetworkParams
    log: list[EpisodeLog] = field(default_factory=list)
    adam: AdamState | None = None

    def final_mean_steps(self, last: int = 100) -> float:
        tail = self.log[-last:]
        return float(np.mean([e.steps for e in tail])) if tail else float("nan")


def write_train_log(path: str | Path, entries: list[EpisodeLog]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAIN_LOG_HEADER)
        for e in entries:
            w.writerow((e.episode, e.steps, repr(e.epsilon), repr(e.mean_loss), int(e.evacuated)))


def train(
    scenario: Scenario,
    phys: PhysicsParams,
    net_config: NetConfig,
    cfg: TrainConfig,
    *,
    init_params: NetworkParams | None = None,
    checkpoint_every: int = 0,
    checkpoint_dir: str | Path | None = None,
    on_episode: Callable[[EpisodeLog], None] | None = None,
) -> TrainResult:
    """Train a Q-network for a lone agent in ``scenario``.

    Each episode starts the agent at a uniformly random free position at
    rest. Every environment step is stored and followed by one direct
    Q-learning update. ``planning_replay`` runs every
    ``cfg.planning_interval`` steps and once more at episode end. All
    randomness derives from ``cfg.seed``.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    init_rng, start_rng, act_rng, replay_rng = (np.random.default_rng(s) for s in streams)
    params = init_params.copy() if init_params is not None else he_init(net_config, init_rng)
    if params.config.layer_sizes != net_config.layer_sizes:
        raise ValueError(f"initial network {params.config.layer_sizes} does not match {net_config.layer_sizes}")
    target = params.copy()
    adam = AdamState.for_params(params, cfg.learning_rate)
    result = TrainResult(params, target, [], adam)
    if cfg.episodes == 0:
        return result

    phys = replace(phys, max_steps=cfg.max_steps)
    env = SingleAgentEnv(scenario, phys)
    memory = ReplayMemory(cfg.memory_capacity)
    grad_buf = params.zeros_like()
    room, vdes = scenario.room_size, phys.desired_speed

    for ep in range(cfg.episodes):
        eps = epsilon_at(ep, cfg)
        start = sample_initial_positions(scenario, 1, start_rng, phys.agent_diameter)[0]
        s = normalize_observation(env.reset(start), room, vdes)
        losses = []
        evacuated = False
        try:
            done = False
            while not done:
                acts = _forward_cache(params, s[None])
                a = _epsilon_greedy(acts[-1][0], eps, act_rng)
                obs, r, evacuated, done = env.step(a)
                s2 = normalize_observation(obs, room, vdes)
                memory.push(s, a, r, s2, evacuated)
                t = Transition(s, a, r, s2, evacuated)
                losses.append(direct_q_update(params, target, adam, t, cfg.gamma, grad_buf=grad_buf, train_acts=acts))
                s = s2
                if cfg.planning_interval and env.steps % cfg.planning_interval == 0 and not done:
                    target, _ = planning_replay(params, target, adam, memory, cfg, replay_rng)
        except IntegrationError as err:
            log.error("episode %d aborted at step %d: %s", ep, env.steps, err)
            evacuated = False
        target, _ = planning_replay(params, target, adam, memory, cfg, replay_rng)
        entry = EpisodeLog(ep, env.steps, eps, float(np.mean(losses)) if losses else 0.0, bool(evacuated))
        result.log.append(entry)
        if on_episode is not None:
            on_episode(entry)
        if checkpoint_every and checkpoint_dir is not None and (ep + 1) % checkpoint_every == 0:
            save_params(params, Path(checkpoint_dir) / f"checkpoint_{ep + 1:06d}.bin")

    result.target = target
    return result


def transfer_train(
    wide: Scenario,
    narrow: Scenario,
    phys: PhysicsParams,
    net_config: NetConfig,
    cfg_wide: TrainConfig,
    cfg_narrow: TrainConfig,
    **kw,
) -> tuple[TrainResult, TrainResult]:
    """Two-stage curriculum: train on the wide-door room, then continue from
    those weights on the narrow-door room with a fresh epsilon schedule."""
    if wide.room_size != narrow.room_size or len(wide.exits) != len(narrow.exits):
        raise ValueError("transfer scenarios must share room size and exits")
    if not np.allclose(wide.exit_centers, narrow.exit_centers):
        raise ValueError("transfer scenarios must share exit centers")
    if wide.obstacles != narrow.obstacles:
        raise ValueError("transfer scenarios must share obstacles")
    first = train(wide, phys, net_config, cfg_wide, **kw)
    second = train(narrow, phys, net_config, cfg_narrow, init_params=first.params, **kw)
    return first, second


# -- tabular variant -------------------------------------------------------

def tabular_q_update(Q: np.ndarray, s: int, a: int, r: float, s2: int, done: bool, alpha: float, gamma: float) -> None:
    """Q(s,a) += alpha * (r + gamma * max Q(s',.) - Q(s,a)); no bootstrap when done."""
    boot = 0.0 if done else gamma * Q[s2].max()
    Q[s, a] += alpha * (r + boot - Q[s, a])


@dataclass(frozen=True)
class TabularConfig:
    episodes: int = 5000
    max_steps: int = 10_000
    alpha: float = 0.5
    gamma: float = 0.999
    planning_steps: int = 10
    epsilon_high: float = 1.0
    epsilon_low: float = 0.1
    p_fraction: float = 0.5
    seed: int = 0


def train_tabular(grid: GridModel, cfg: TabularConfig) -> np.ndarray:
    """Tabular Dyna-Q on a grid; returns the Q table (n_cells, 8).

    Real steps apply the tabular Q-learning rule and record the
    deterministic model; each is followed by ``planning_steps`` updates on
    uniformly drawn previously seen state-action pairs.
    """
    rng = np.random.default_rng(cfg.seed)
    Q = np.zeros((grid.n_cells, N_ACTIONS))
    starts = grid.free_cells()
    starts = starts[grid.reachable()[starts]]
    seen: dict[tuple[int, int], tuple[float, int, bool]] = {}
    keys: list[tuple[int, int]] = []
    sched = TrainConfig(episodes=max(cfg.episodes, 1), epsilon_high=cfg.epsilon_high,
                        epsilon_low=cfg.epsilon_low, p_fraction=cfg.p_fraction)
    for ep in range(cfg.episodes):
        eps = epsilon_at(ep, sched)
        s = int(starts[rng.integers(len(starts))])
        for _ in range(cfg.max_steps):
            a = _epsilon_greedy(Q[s], eps, rng)
            s2 = int(grid.next_cell[s, a])
            r = float(grid.reward[s, a])
            done = bool(grid.terminal[s2])
            tabular_q_update(Q, s, a, r, s2, done, cfg.alpha, cfg.gamma)
            if (s, a) not in seen:
                keys.append((s, a))
            seen[(s, a)] = (r, s2, done)
            for _ in range(cfg.planning_steps):
                ps, pa = keys[rng.integers(len(keys))]
                pr, ps2, pdone = seen[(ps, pa)]
                tabular_q_update(Q, ps, pa, pr, ps2, pdone, cfg.alpha, cfg.gamma)
            if done:
                break
            s = s2
    return Q
