"""Dense networks with hand-written backprop and the TD3 learner."""
from __future__ import annotations

import copy
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class DivergenceError(RuntimeError):
    pass


class DenseNet:
    """Fully connected ReLU network.

    ``output`` is "linear" or "tanh"; with "tanh" the result is
    ``output_scale * tanh(z)``. Inputs are row-major batches ``(B, in_dim)``;
    a 1-D input is treated as a batch of one and returned 1-D.
    """

    def __init__(self, dims: Sequence[int], output: str = "linear", output_scale: float = 1.0, rng=None):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.dims = [int(d) for d in dims]
        self.output = output
        self.output_scale = float(output_scale)
        rng = np.random.default_rng(0) if rng is None else rng
        self.W: List[np.ndarray] = []
        self.b: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.b.append(rng.uniform(-bound, bound, size=fan_out))
        self._cache = None

    @property
    def params(self) -> List[np.ndarray]:
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def copy(self) -> "DenseNet":
        return copy.deepcopy(self)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.dims[0]:
            raise ValueError(f"shape mismatch: expected input width {self.dims[0]}, got {h.shape[1]}")
        acts = [h]
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = self.output_scale * np.tanh(z)
            else:
                h = z
            acts.append(h)
        self._cache = acts
        return h[0] if squeeze else h

    def backward(self, grad_out) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. params (W0, b0, W1, b1, ...) and the input."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts = self._cache
        g = np.asarray(grad_out, dtype=float)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[None, :]
        out = acts[-1]
        if self.output == "tanh":
            t = out / self.output_scale
            g = g * self.output_scale * (1.0 - t * t)
        grads: List[np.ndarray] = []
        for i in range(len(self.W) - 1, -1, -1):
            h_in = acts[i]
            grads.append(g.sum(axis=0))
            grads.append(h_in.T @ g)
            g = g @ self.W[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        grads.reverse()  # now W0, b0, W1, b1, ...
        return grads, (g[0] if squeeze else g)

    def soft_update_from(self, src: "DenseNet", tau: float) -> None:
        for p, q in zip(self.params, src.params):
            p *= 1.0 - tau
            p += tau * q

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        for p, q in zip(self.params, params):
            p[...] = q


class Optimizer:
    """Plain gradient descent or Adam, both with global-norm gradient clipping."""

    def __init__(self, params: List[np.ndarray], lr: float, kind: str = "sgd", clip_norm: float = 10.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.params = params
        self.lr = lr
        self.kind = kind
        self.clip_norm = clip_norm
        self.betas = betas
        self.eps = eps
        self.t = 0
        if kind == "adam":
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if not math.isfinite(norm):
            raise DivergenceError("divergence: non-finite gradient")
        scale = self.clip_norm / norm if self.clip_norm and norm > self.clip_norm else 1.0
        self.t += 1
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p -= self.lr * scale * g
            return
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = scale * g
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TD3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    smoothing_sigma: float = 0.2
    smoothing_clip: float = 0.5
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    batch: int = 128
    action_bound: float = 3.0
    hidden: int = 256
    optimizer: str = "adam"
    grad_clip: float = 10.0
    reward_scale: float = 0.01

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if not self.smoothing_clip > 0:
            raise ValueError("smoothing_clip must be positive")


class TD3Agent:
    """Actor, twin critics and their three target copies."""

    def __init__(self, state_dim: int, action_dim: int, cfg: TD3Config = TD3Config(), seed: int = 0,
                 state_scale: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.state_dim = state_dim
        self.action_dim = action_dim
        rng = np.random.default_rng(seed)
        h = cfg.hidden
        self.actor = DenseNet([state_dim, h, h, action_dim], "tanh", cfg.action_bound, rng)
        self.critic1 = DenseNet([state_dim + action_dim, h, h, 1], "linear", 1.0, rng)
        self.critic2 = DenseNet([state_dim + action_dim, h, h, 1], "linear", 1.0, rng)
        self.actor_t = self.actor.copy()
        self.critic1_t = self.critic1.copy()
        self.critic2_t = self.critic2.copy()
        self.actor_opt = Optimizer(self.actor.params, cfg.actor_lr, cfg.optimizer, cfg.grad_clip)
        self.critic1_opt = Optimizer(self.critic1.params, cfg.critic_lr, cfg.optimizer, cfg.grad_clip)
        self.critic2_opt = Optimizer(self.critic2.params, cfg.critic_lr, cfg.optimizer, cfg.grad_clip)
        self.state_scale = np.ones(state_dim) if state_scale is None else np.asarray(state_scale, dtype=float)
        self.rng = np.random.default_rng(seed + 1)
        self.learn_steps = 0
        self.actor_updates = 0
        self.episode_index = 0

    @property
    def networks(self) -> List[DenseNet]:
        return [self.actor, self.critic1, self.critic2, self.actor_t, self.critic1_t, self.critic2_t]

    def _norm(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(s, dtype=float) / self.state_scale

    def act(self, s) -> np.ndarray:
        return self.actor.forward(self._norm(s))

    def q_values(self, critic: DenseNet, s, a) -> np.ndarray:
        return critic.forward(np.hstack([self._norm(s), np.asarray(a, dtype=float)]))[:, 0]

    def compute_targets(self, batch: Dict[str, np.ndarray], rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Clipped double-Q target with smoothed target action; bootstrap is masked at terminals."""
        cfg = self.cfg
        rng = self.rng if rng is None else rng
        s2 = batch["s_next"]
        a2 = self.actor_t.forward(self._norm(s2))
        noise = np.clip(rng.normal(0.0, 1.0, size=a2.shape) * cfg.smoothing_sigma, -cfg.smoothing_clip, cfg.smoothing_clip)
        a2 = np.clip(a2 + noise, -cfg.action_bound, cfg.action_bound)
        q1 = self.q_values(self.critic1_t, s2, a2)
        q2 = self.q_values(self.critic2_t, s2, a2)
        r = cfg.reward_scale * np.asarray(batch["r"], dtype=float)
        return r + cfg.gamma * (1.0 - np.asarray(batch["done"], dtype=float)) * np.minimum(q1, q2)

    def update_critics(self, batch, y, is_weights) -> np.ndarray:
        """One weighted-MSE gradient step per critic; returns TD errors of critic 1 before the step."""
        y = np.asarray(y, dtype=float)
        w = np.asarray(is_weights, dtype=float)
        n = len(y)
        x = np.hstack([self._norm(batch["s"]), np.asarray(batch["a"], dtype=float)])
        td = None
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q = critic.forward(x)[:, 0]
            err = q - y
            loss = float(np.mean(w * err * err))
            if not math.isfinite(loss):
                raise DivergenceError("divergence: non-finite critic loss")
            grads, _ = critic.backward((2.0 * w * err / n)[:, None])
            opt.step(grads)
            if td is None:
                td = y - q
        return td

    def critic_loss(self, batch, y, is_weights) -> float:
        x = np.hstack([self._norm(batch["s"]), np.asarray(batch["a"], dtype=float)])
        err = self.critic1.forward(x)[:, 0] - np.asarray(y, dtype=float)
        return float(np.mean(np.asarray(is_weights) * err * err))

    def update_actor_and_targets(self, batch, step_counter: int) -> bool:
        """Delayed actor ascent on Q1 and soft target updates; acts when step_counter % d == 0."""
        if step_counter % self.cfg.policy_delay != 0:
            return False
        s = self._norm(batch["s"])
        n = len(s)
        a = self.actor.forward(s)
        self.critic1.forward(np.hstack([s, a]))
        _, dx = self.critic1.backward(np.full((n, 1), -1.0 / n))  # minimise -mean Q1
        grads, _ = self.actor.backward(dx[:, self.state_dim :])
        self.actor_opt.step(grads)
        self.soft_update_targets(self.cfg.tau)
        self.actor_updates += 1
        return True

    def soft_update_targets(self, tau: float) -> None:
        self.actor_t.soft_update_from(self.actor, tau)
        self.critic1_t.soft_update_from(self.critic1, tau)
        self.critic2_t.soft_update_from(self.critic2, tau)

    def learn(self, buffer, rng: np.random.Generator) -> np.ndarray:
        """One full TD3+PER update: sample, targets, critics, delayed actor, priority write-back."""
        idx, gens, batch, w = buffer.sample(self.cfg.batch, rng)
        y = self.compute_targets(batch)
        td = self.update_critics(batch, y, w)
        self.learn_steps += 1
        self.update_actor_and_targets(batch, self.learn_steps)
        buffer.update_priorities(idx, td, gens)
        return td


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"SWNVCKPT"
FORMAT_VERSION = 1
_OUT_CODES = {"linear": 0, "tanh": 1}


class CheckpointVersionError(ValueError):
    pass


def save_checkpoint(agent: TD3Agent, path) -> None:
    """Binary layout (little-endian): magic, u32 version, u32 net count, per-net
    header (u32 layer count, u32 dims..., u32 output code, f64 scale), then
    every net's f64 parameters in (W0, b0, W1, b1, ...) order, the f64 state
    normalisation vector, then u64 learn steps, u64 actor updates, u64 episode
    index."""
    nets = agent.networks
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(nets))]
    for net in nets:
        parts.append(struct.pack("<I", len(net.dims)))
        parts.append(struct.pack(f"<{len(net.dims)}I", *net.dims))
        parts.append(struct.pack("<Id", _OUT_CODES[net.output], net.output_scale))
    for net in nets:
        for p in net.params:
            parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(agent.state_scale, dtype="<f8").tobytes())
    parts.append(struct.pack("<QQQ", agent.learn_steps, agent.actor_updates, agent.episode_index))
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, agent: Optional[TD3Agent] = None, cfg: TD3Config = TD3Config()) -> TD3Agent:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version, n_nets = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version} found, expected {FORMAT_VERSION}")
    headers = []
    for _ in range(n_nets):
        (n_dims,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = list(struct.unpack_from(f"<{n_dims}I", data, off))
        off += 4 * n_dims
        code, scale = struct.unpack_from("<Id", data, off)
        off += 12
        headers.append((dims, code, scale))
    if agent is None:
        dims0 = headers[0][0]
        hidden = dims0[1]
        cfg = TD3Config(**{**cfg.__dict__, "hidden": hidden, "action_bound": headers[0][2]})
        agent = TD3Agent(dims0[0], dims0[-1], cfg)
    for net, (dims, code, scale) in zip(agent.networks, headers):
        if net.dims != dims:
            raise ValueError(f"{path}: layer dimensions {dims} do not match {net.dims}")
        for p in net.params:
            n = p.size
            p[...] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(p.shape)
            off += 8 * n
    agent.state_scale = np.frombuffer(data, dtype="<f8", count=agent.state_dim, offset=off).copy()
    off += 8 * agent.state_dim
    agent.learn_steps, agent.actor_updates, agent.episode_index = struct.unpack_from("<QQQ", data, off)
    return agent
