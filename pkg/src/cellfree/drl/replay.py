"""Fixed-capacity FIFO experience replay with uniform minibatch sampling."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    state: np.ndarray  # (L, K) normalized
    weights: np.ndarray  # (L, K*M~) applied beamforming action
    cluster: np.ndarray  # (L,) int
    reward: np.ndarray  # (L,)
    next_state: np.ndarray  # (L, K)
    ids: np.ndarray  # (L,) insertion counter of each transition

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    def __init__(self, capacity, state_dim, action_dim):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state = np.zeros((capacity, state_dim))
        self.weights = np.zeros((capacity, action_dim))
        self.cluster = np.zeros(capacity, dtype=np.int64)
        self.reward = np.zeros(capacity)
        self.next_state = np.zeros((capacity, state_dim))
        self.ids = np.zeros(capacity, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, state, weights, cluster, reward, next_state):
        i = self.cursor
        self.state[i] = state
        self.weights[i] = weights
        self.cluster[i] = cluster
        self.reward[i] = reward
        self.next_state[i] = next_state
        self.ids[i] = self.inserted
        self.inserted += 1
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, n):
        """n distinct stored transitions, uniformly at random."""
        if n > self.size:
            raise ValueError(f"cannot sample {n} from {self.size} transitions")
        idx = rng.choice(self.size, size=n, replace=False)
        return Batch(self.state[idx], self.weights[idx], self.cluster[idx], self.reward[idx],
                     self.next_state[idx], self.ids[idx])
