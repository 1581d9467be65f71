"""Fixed-capacity FIFO replay buffer over preallocated float64 arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import Transition


class BufferNotReady(RuntimeError):
    """Raised when sampling is requested before enough transitions exist."""


@dataclass
class Minibatch:
    """A sampled batch; rewards and continuations carry a trailing unit axis."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    continuations: np.ndarray


class ReplayBuffer:
    """Ring buffer storing raw (unnormalized) transitions.

    Once full, each push overwrites the oldest entry. Sampling is uniform
    without replacement in randomized order.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros((capacity, 1))
        self._next_states = np.zeros((capacity, state_dim))
        self._continuations = np.zeros((capacity, 1))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def size(self) -> int:
        return self._size

    @property
    def cursor(self) -> int:
        return self._cursor

    def push(self, transition: Transition) -> None:
        i = self._cursor
        self._states[i] = transition.state
        self._actions[i] = transition.action
        self._rewards[i, 0] = transition.reward
        self._next_states[i] = transition.next_state
        self._continuations[i, 0] = transition.continuation
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Minibatch:
        if self._size < batch_size:
            raise BufferNotReady(
                f"buffer holds {self._size} transitions, need {batch_size}")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return Minibatch(
            states=self._states[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_states=self._next_states[idx].copy(),
            continuations=self._continuations[idx].copy(),
        )
