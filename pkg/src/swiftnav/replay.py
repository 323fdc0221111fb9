"""Proportional prioritized experience replay backed by a sum tree."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

STATE_DIM = 72
ACTION_DIM = 10


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class SumTree:
    """Array-backed binary tree whose internal nodes hold the sum of their leaves.

    Leaves live at ``[size - 1, 2 * size - 1)`` where ``size`` is the capacity
    rounded up to a power of two.
    """

    def __init__(self, capacity: int):
        size = 1
        while size < capacity:
            size *= 2
        self.capacity = capacity
        self.size = size
        self.nodes = np.zeros(2 * size - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    def leaf(self, i: int) -> float:
        return float(self.nodes[i + self.size - 1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.size - 1 : self.size - 1 + self.capacity]

    def set(self, i: int, value: float) -> None:
        idx = i + self.size - 1
        self.nodes[idx] = value
        # recompute parents from children rather than adding deltas, so
        # rounding error cannot accumulate over long runs
        while idx:
            idx = (idx - 1) // 2
            self.nodes[idx] = self.nodes[2 * idx + 1] + self.nodes[2 * idx + 2]

    def find(self, mass: float) -> int:
        """Leaf index whose cumulative interval contains ``mass``."""
        idx = 0
        while idx < self.size - 1:
            left = 2 * idx + 1
            if mass < self.nodes[left] or self.nodes[left + 1] <= 0.0:
                idx = left
            else:
                mass -= self.nodes[left]
                idx = left + 1
        return idx - (self.size - 1)


class PERBuffer:
    def __init__(
        self,
        capacity: int = 50_000,
        alpha: float = 0.6,
        beta_start: float = 0.4,
        beta_end: float = 1.0,
        priority_floor: float = 1e-3,
        state_dim: int = STATE_DIM,
        action_dim: int = ACTION_DIM,
    ):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.beta = beta_start
        self.priority_floor = priority_floor
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.tree = SumTree(capacity)
        self.priorities = np.zeros(capacity)  # raw p_i, before the alpha exponent
        self.p_max = 1.0
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.write_count = np.zeros(capacity, dtype=np.int64)  # generation tag per slot
        self.cursor = 0
        self.n = 0
        self.stale_updates = 0

    def __len__(self) -> int:
        return self.n

    def push(self, t: Transition) -> int:
        s, a, s2 = (np.asarray(x, dtype=float).reshape(-1) for x in (t.s, t.a, t.s_next))
        if s.shape != (self.state_dim,) or a.shape != (self.action_dim,) or s2.shape != (self.state_dim,):
            raise ValueError("shape mismatch")
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = s, a, float(t.r), s2, bool(t.done)
        self.write_count[i] += 1
        self._set_priority(i, self.p_max)
        self.cursor = (i + 1) % self.capacity
        self.n = min(self.n + 1, self.capacity)
        return i

    def _set_priority(self, i: int, p: float) -> None:
        p = max(float(p), self.priority_floor)
        self.priorities[i] = p
        self.tree.set(i, p**self.alpha)

    def probabilities(self) -> np.ndarray:
        pa = self.priorities[: self.n] ** self.alpha
        return pa / pa.sum()

    def sample(self, batch: int, rng: np.random.Generator):
        """Stratified proportional sample.

        Returns ``(indices, generations, batch_dict, is_weights)``; pass
        ``indices`` and ``generations`` back to :meth:`update_priorities`.
        """
        if self.n < batch:
            raise ValueError("underfilled buffer")
        total = self.tree.total
        bounds = np.linspace(0.0, total, batch + 1)
        u = rng.uniform(bounds[:-1], bounds[1:])
        idx = np.array([self.tree.find(m) for m in u], dtype=np.int64)
        idx = np.minimum(idx, self.n - 1)
        probs = self.priorities[idx] ** self.alpha / total
        w = (self.n * probs) ** (-self.beta)
        w = w / w.max()
        data = {
            "s": self.s[idx],
            "a": self.a[idx],
            "r": self.r[idx],
            "s_next": self.s_next[idx],
            "done": self.done[idx].astype(float),
        }
        return idx, self.write_count[idx].copy(), data, w

    def update_priorities(self, indices, td_errors, generations=None) -> None:
        """Refresh priorities to |delta| + floor; entries overwritten since sampling are skipped."""
        td = np.abs(np.asarray(td_errors, dtype=float))
        for k, (i, e) in enumerate(zip(indices, td)):
            i = int(i)
            if i >= self.n or (generations is not None and self.write_count[i] != generations[k]):
                self.stale_updates += 1
                continue
            self._set_priority(i, e + self.priority_floor)
            self.p_max = max(self.p_max, e)

    def anneal_beta(self, fraction: float) -> None:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        self.beta = self.beta_start + fraction * (self.beta_end - self.beta_start)
