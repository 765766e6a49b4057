"""Fully connected Q-network in plain numpy.

ELU hidden layers, linear 8-way output head, He-normal initialisation,
mean-squared TD loss with a frozen target network, Adam, and soft target
updates. All parameters of a network live in one flat float64 vector; the
per-layer weight and bias arrays are views into it, so optimizer updates are
a handful of whole-vector operations.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PRESETS = {
    "small": (64, 128, 64),
    "deep": (64, 128, 128, 64),
    "wide4": (64, 64, 64, 64),
}
MAGIC = b"EVQN"
FORMAT_VERSION = 1


class WeightFileError(ValueError):
    """Bad magic, unsupported version, or shape mismatch in a weight file."""


@dataclass(frozen=True)
class NetConfig:
    hidden_sizes: tuple[int, ...] = PRESETS["small"]
    input_size: int = 4
    output_size: int = 8
    elu_alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {self.layer_sizes}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden_sizes, self.output_size)

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


class NetworkParams:
    """Weights and biases of one network, backed by a flat vector."""

    def __init__(self, config: NetConfig, flat: np.ndarray | None = None):
        self.config = config
        if flat is None:
            flat = np.zeros(config.n_params)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (config.n_params,):
            raise ValueError(f"expected {config.n_params} parameters, got {flat.shape}")
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        sizes = config.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(flat[off:off + fan_in * fan_out].reshape(fan_in, fan_out))
            off += fan_in * fan_out
            self.biases.append(flat[off:off + fan_out])
            off += fan_out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, self.flat.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.config)

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, NetworkParams) and self.config == other.config
                and np.array_equal(self.flat, other.flat))

    def __repr__(self) -> str:
        return f"NetworkParams(layers={self.config.layer_sizes})"


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.scratch is None or self.scratch.shape != self.m.shape:
            self.scratch = np.empty_like(self.m)

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float = 1e-4, **kw) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat), 0, learning_rate, **kw)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step, self.learning_rate, self.beta1, self.beta2, self.eps)


def he_init(config: NetConfig, seed: int | np.random.Generator) -> NetworkParams:
    """Weights ~ N(0, 2/fan_in) per layer, biases zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = NetworkParams(config)
    for w in params.weights:
        w[...] = rng.normal(0.0, math.sqrt(2.0 / w.shape[0]), size=w.shape)
    return params


def normalize_observation(obs: np.ndarray, room_size: Sequence[float], desired_speed: float) -> np.ndarray:
    """Map raw (x, y, vx, vy) rows to network inputs.

    Positions go to (x/W - 0.5, y/H - 0.5); velocities are divided by the
    desired speed.
    """
    obs = np.asarray(obs, dtype=float)
    scale = np.array([1.0 / room_size[0], 1.0 / room_size[1], 1.0 / desired_speed, 1.0 / desired_speed])
    shift = np.array([0.5, 0.5, 0.0, 0.0])
    return obs * scale - shift


def normalize_state(s, scenario, p) -> np.ndarray:
    """Network input for an AgentState in ``scenario`` under physics ``p``."""
    raw = np.array([s.position[0], s.position[1], s.velocity[0], s.velocity[1]])
    return normalize_observation(raw, scenario.room_size, s.desired_speed if s.desired_speed > 0 else p.desired_speed)


def elu(z: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(z > 0, z, alpha * np.expm1(np.minimum(z, 0.0)))


def _forward_cache(params: NetworkParams, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first, Q-values last."""
    alpha = params.config.elu_alpha
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == last else elu(z, alpha)
        acts.append(h)
    return acts


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Q-values for one input (4,) -> (8,) or a batch (B, 4) -> (B, 8)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.config.input_size:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.config.input_size}")
    q = _forward_cache(params, x)[-1]
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("non-finite Q-values")
    return q


def _backward(params: NetworkParams, acts: list[np.ndarray], dq: np.ndarray, grad: NetworkParams) -> None:
    """Accumulate dLoss/dparams into ``grad`` given dLoss/dQ for a batch."""
    alpha = params.config.elu_alpha
    delta = dq
    for i in range(len(params.weights) - 1, -1, -1):
        h_in = acts[i]
        np.matmul(h_in.T, delta, out=grad.weights[i])
        np.sum(delta, axis=0, out=grad.biases[i])
        if i == 0:
            break
        delta = delta @ params.weights[i].T
        # elu'(z) = 1 for z > 0, else elu(z) + alpha
        a = acts[i]
        delta = delta * np.where(a > 0, 1.0, a + alpha)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        ts = list(transitions)
        return cls(
            np.array([t.state for t in ts], dtype=float).reshape(len(ts), -1),
            np.array([t.action for t in ts], dtype=np.int64),
            np.array([t.reward for t in ts], dtype=float),
            np.array([t.next_state for t in ts], dtype=float).reshape(len(ts), -1),
            np.array([t.done for t in ts], dtype=bool),
        )


def td_targets(target: NetworkParams, batch: Batch, gamma: float) -> np.ndarray:
    """R + gamma * max_a' Q_target(s', a'), without bootstrap after terminal steps."""
    q_next = forward(target, batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.dones, 0.0, q_next)


def td_loss_and_gradient(
    train: NetworkParams,
    target: NetworkParams,
    batch,
    gamma: float,
    *,
    out: NetworkParams | None = None,
    train_acts: list[np.ndarray] | None = None,
) -> tuple[float, NetworkParams]:
    """Mean squared TD error over ``batch`` and its gradient w.r.t. ``train``.

    Only the taken action's output enters the loss; the target network is a
    constant. ``train_acts`` may carry a cached forward pass of ``train`` on
    ``batch.states``.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(batch)
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    y = td_targets(target, batch, gamma)
    acts = train_acts if train_acts is not None else _forward_cache(train, batch.states)
    q = acts[-1]
    rows = np.arange(n)
    err = q[rows, batch.actions] - y
    loss = float(np.mean(err * err))
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = 2.0 * err / n
    grad = out if out is not None else train.zeros_like()
    _backward(train, acts, dq, grad)
    return loss, grad


def adam_update(params: NetworkParams, state: AdamState, gradient: NetworkParams) -> None:
    """One bias-corrected Adam step, in place on ``params`` and ``state``.

    Uses the folded form lr_t = lr sqrt(1 - b2^t) / (1 - b1^t) with
    eps_t = eps sqrt(1 - b2^t), which equals the textbook update with
    bias-corrected moments. Works through a scratch buffer: vectors of this
    size are above malloc's mmap threshold, so temporaries are costly.
    """
    g = gradient.flat
    if not math.isfinite(float(g.sum())):
        raise FloatingPointError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c2 = math.sqrt(1.0 - b2 ** state.step)
    lr_t = state.learning_rate * c2 / (1.0 - b1 ** state.step)
    eps_t = state.eps * c2
    tmp = state.scratch
    m, v = state.m, state.v
    m *= b1
    np.multiply(g, 1.0 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(g, g, out=tmp)
    tmp *= 1.0 - b2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp += eps_t
    np.divide(m, tmp, out=tmp)
    tmp *= lr_t
    params.flat -= tmp


def soft_update(target: NetworkParams, train: NetworkParams, mu: float) -> NetworkParams:
    """target + mu * (train - target), returned as a new network."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must be in [0, 1], got {mu}")
    if target.config.layer_sizes != train.config.layer_sizes:
        raise ValueError("target and train networks have different shapes")
    if mu == 1.0:
        return train.copy()
    return NetworkParams(target.config, target.flat + mu * (train.flat - target.flat))


def save_params(params: NetworkParams, path: str | Path) -> None:
    """Write the weight file.

    Layout, little-endian: magic ``EVQN``; uint32 format version; float64
    ELU alpha; uint32 number of layer sizes L; L x uint32 layer sizes (input,
    hidden..., output); then for each layer its weight matrix (fan_in x
    fan_out, row-major) followed by its bias vector, all float64.
    """
    sizes = params.config.layer_sizes
    header = MAGIC + struct.pack("<Id I", FORMAT_VERSION, params.config.elu_alpha, len(sizes))
    header += struct.pack(f"<{len(sizes)}I", *sizes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path: str | Path, expect: NetConfig | None = None) -> NetworkParams:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise WeightFileError(f"{path}: not a weight file (bad magic)")
    version, alpha, n = struct.unpack_from("<Id I", data, 4)
    if version != FORMAT_VERSION:
        raise WeightFileError(f"{path}: unsupported format version {version}")
    off = 4 + struct.calcsize("<Id I")
    sizes = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    config = NetConfig(tuple(sizes[1:-1]), sizes[0], sizes[-1], alpha)
    if expect is not None and expect.layer_sizes != config.layer_sizes:
        raise WeightFileError(f"{path}: shape mismatch, file has layers {config.layer_sizes}, "
                              f"expected {expect.layer_sizes}")
    flat = np.frombuffer(data, dtype="<f8", offset=off)
    if flat.size != config.n_params:
        raise WeightFileError(f"{path}: truncated or oversized parameter block")
    return NetworkParams(config, flat.astype(np.float64))
