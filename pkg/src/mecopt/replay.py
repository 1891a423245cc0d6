"""Uniform-sampling transition store with FIFO eviction."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Ring buffer of (state, action, reward, next state) transitions.

    Storage grows in chunks up to `capacity`; sampling is uniform without
    replacement within a batch and deterministic for a fixed seed.
    """

    GROW = 65536

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed=0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._rng = seed if isinstance(seed, np.random.Generator) \
            else np.random.default_rng(seed)
        self._allocated = 0
        self._size = 0
        self._head = 0
        self.states = np.empty((0, state_dim))
        self.actions = np.empty((0, action_dim))
        self.rewards = np.empty(0)
        self.next_states = np.empty((0, state_dim))

    def __len__(self) -> int:
        return self._size

    def _ensure(self, index: int) -> None:
        if index < self._allocated:
            return
        new_alloc = min(self.capacity, max(self.GROW, 2 * self._allocated))
        grow = new_alloc - self._allocated
        self.states = np.concatenate([self.states, np.empty((grow, self.state_dim))])
        self.actions = np.concatenate([self.actions, np.empty((grow, self.action_dim))])
        self.rewards = np.concatenate([self.rewards, np.empty(grow)])
        self.next_states = np.concatenate(
            [self.next_states, np.empty((grow, self.state_dim))])
        self._allocated = new_alloc

    def add(self, state, action, reward: float, next_state) -> None:
        self._ensure(self._head)
        self.states[self._head] = state
        self.actions[self._head] = action
        self.rewards[self._head] = reward
        self.next_states[self._head] = next_state
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if batch_size <= 0:
            raise ValueError("batch size must be positive")
        if self._size < batch_size:
            raise ValueError(
                f"buffer holds {self._size} transitions, need {batch_size}")
        idx = self._rng.choice(self._size, size=batch_size, replace=False)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "indices": idx,
        }
