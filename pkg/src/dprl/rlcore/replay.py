from __future__ import annotations

import threading

import numpy as np

from ..envsim.dataset import read_dataset, write_dataset
from ..envsim.envs import TransitionRecord


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions."""

    def __init__(self, capacity, obs_dim, act_dim):
        self.capacity = int(capacity)
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.state = np.zeros((self.capacity, obs_dim))
        self.action = np.zeros((self.capacity, act_dim))
        self.reward = np.zeros(self.capacity)
        self.next_state = np.zeros((self.capacity, obs_dim))
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.truncated = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.cursor = 0
        self._lock = threading.Lock()

    def __len__(self):
        return self.size

    def add(self, rec):
        """Append one transition or a batch of them."""
        s = np.asarray(rec.state).reshape(-1, self.obs_dim)
        n = len(s)
        cols = (
            s,
            np.asarray(rec.action).reshape(n, self.act_dim),
            np.asarray(rec.reward).reshape(n),
            np.asarray(rec.next_state).reshape(n, self.obs_dim),
            np.asarray(rec.terminal).reshape(n),
            np.asarray(rec.truncated).reshape(n),
        )
        if n > self.capacity:
            skip = n - self.capacity
            cols = tuple(c[skip:] for c in cols)
            self.cursor = (self.cursor + skip) % self.capacity
            n = self.capacity
        with self._lock:
            idx = (self.cursor + np.arange(n)) % self.capacity
            for dst, src in zip(self._columns(), cols):
                dst[idx] = src
            self.cursor = int((self.cursor + n) % self.capacity)
            self.size = min(self.size + n, self.capacity)

    def _columns(self):
        return (self.state, self.action, self.reward, self.next_state, self.terminal, self.truncated)

    def sample(self, batch_size, rng):
        with self._lock:
            size = self.size
            if size == 0:
                raise ValueError("cannot sample from an empty buffer")
            idx = rng.choice(size, size=min(batch_size, size), replace=False)
            return TransitionRecord(*(c[idx].copy() for c in self._columns()))

    def ordered(self):
        """All stored transitions, oldest first."""
        with self._lock:
            if self.size < self.capacity:
                idx = np.arange(self.size)
            else:
                idx = (self.cursor + np.arange(self.capacity)) % self.capacity
            return TransitionRecord(*(c[idx].copy() for c in self._columns()))

    def save(self, path, env_id):
        return write_dataset(path, self.ordered(), env_id)

    @classmethod
    def load(cls, path, capacity=None):
        rec, meta = read_dataset(path)
        buf = cls(capacity or max(meta["count"], 1), rec.state.shape[1], rec.action.shape[1])
        buf.add(rec)
        return buf
