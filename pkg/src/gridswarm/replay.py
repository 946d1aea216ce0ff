"""Proportional prioritized experience replay backed by a sum tree."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gnn_policy import GraphSnapshot

DEFAULT_CAPACITY = 100_000
PER_ALPHA = 0.6
PER_EPS = 0.01


@dataclass
class Transition:
    obs: GraphSnapshot | np.ndarray
    action: int
    reward: float
    next_obs: GraphSnapshot | np.ndarray
    terminal: bool
    agent_id: int = 0


@dataclass
class SampleBatch:
    transitions: list[Transition]
    indices: np.ndarray    # leaf slots
    insert_ids: np.ndarray  # monotone ids for staleness detection
    weights: np.ndarray    # normalized importance weights, max = 1


class SumTree:
    """Binary indexed tree over leaf priorities supporting prefix-sum sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity - 1)

    def update(self, leaf: int, priority: float) -> None:
        idx = leaf + self.capacity - 1
        change = priority - self.tree[idx]
        self.tree[idx] = priority
        while idx != 0:
            idx = (idx - 1) // 2
            self.tree[idx] += change

    def get(self, leaf: int) -> float:
        return self.tree[leaf + self.capacity - 1]

    def total(self) -> float:
        return self.tree[0]

    def find(self, value: float) -> int:
        """Leaf whose prefix-sum interval contains `value`."""
        idx = 0
        while True:
            left = 2 * idx + 1
            if left >= len(self.tree):
                return idx - (self.capacity - 1)
            if value <= self.tree[left]:
                idx = left
            else:
                value -= self.tree[left]
                idx = left + 1


class ReplayBuffer:
    """Ring buffer with proportional priorities p_i = (|delta| + eps)^alpha.

    `weight_mode="proportional"` (default) computes importance weights
    (N * P(i))^(-beta) and max-normalizes; `"literal"` uses the raw
    (1/N * 1/p_i)^beta form before the same normalization.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, alpha: float = PER_ALPHA,
                 eps: float = PER_EPS, seed: int = 0,
                 weight_mode: str = "proportional"):
        if weight_mode not in ("proportional", "literal"):
            raise ValueError(f"unknown weight_mode {weight_mode!r}")
        self.capacity = capacity
        self.alpha = alpha
        self.eps = eps
        self.weight_mode = weight_mode
        self.tree = SumTree(capacity)
        self.storage: list[Transition | None] = [None] * capacity
        self.insert_ids = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self.next_id = 0
        self.max_priority = 1.0
        self.stale_updates = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        """Store with the current max priority; overwrites the oldest when full."""
        self.storage[self.cursor] = t
        self.insert_ids[self.cursor] = self.next_id
        self.next_id += 1
        self.tree.update(self.cursor, self.max_priority)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int = 64, beta: float = 0.4) -> SampleBatch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        total = self.tree.total()
        draws = self.rng.uniform(0.0, total, size=batch_size)
        indices = np.array([self.tree.find(v) for v in draws])
        priorities = np.array([self.tree.get(i) for i in indices])
        probs = priorities / total
        if self.weight_mode == "proportional":
            raw = (self.size * probs) ** (-beta)
        else:
            raw = (1.0 / self.size / priorities) ** beta
        weights = raw / raw.max()
        return SampleBatch(
            transitions=[self.storage[i] for i in indices],
            indices=indices,
            insert_ids=self.insert_ids[indices].copy(),
            weights=weights,
        )

    def update_priorities(self, batch: SampleBatch, td_errors: np.ndarray) -> None:
        """Set leaf priorities to (|delta| + eps)^alpha; stale slots are skipped."""
        for slot, ins_id, delta in zip(batch.indices, batch.insert_ids, td_errors):
            if self.insert_ids[slot] != ins_id:
                self.stale_updates += 1
                continue
            p = (abs(float(delta)) + self.eps) ** self.alpha
            self.tree.update(int(slot), p)
            self.max_priority = max(self.max_priority, p)

    def priorities(self) -> np.ndarray:
        return np.array([self.tree.get(i) for i in range(self.size)])
