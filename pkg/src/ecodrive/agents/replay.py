"""Uniform experience replay over preallocated arrays.

Grids are stored as uint8 to keep half a million transitions affordable;
they are promoted to float64 when a batch is assembled. Batches sample
uniformly without replacement via Floyd's algorithm.
"""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    def __init__(self, capacity: int, grid_shape: tuple[int, int], logic_len: int):
        self.capacity = int(capacity)
        rows, lanes = grid_shape
        self.grid = np.zeros((self.capacity, rows, lanes), dtype=np.uint8)
        self.logic = np.zeros((self.capacity, logic_len))
        self.k = np.zeros(self.capacity, dtype=np.int16)
        self.x = np.zeros(self.capacity)
        self.reward = np.zeros(self.capacity)
        self.next_grid = np.zeros_like(self.grid)
        self.next_logic = np.zeros_like(self.logic)
        self.done = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def add(self, grid, logic, k: int, x: float, reward: float,
            next_grid, next_logic, done: bool):
        i = self._head
        self.grid[i] = grid
        self.logic[i] = logic
        self.k[i] = k
        self.x[i] = x
        self.reward[i] = reward
        if next_grid is not None:
            self.next_grid[i] = next_grid
            self.next_logic[i] = next_logic
        self.done[i] = done
        self._head = (self._head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        """Uniform without replacement (Floyd's algorithm)."""
        n = self.size
        if batch > n:
            raise ValueError(f"cannot sample {batch} from {n} transitions")
        chosen: set[int] = set()
        out = np.empty(batch, dtype=np.int64)
        pos = 0
        for j in range(n - batch, n):
            t = int(rng.integers(0, j + 1))
            if t in chosen:
                t = j
            chosen.add(t)
            out[pos] = t
            pos += 1
        return out

    def batch(self, idx: np.ndarray) -> dict:
        return {
            "grid": self.grid[idx].astype(np.float64)[..., None],
            "logic": self.logic[idx].copy(),
            "k": self.k[idx].copy(),
            "x": self.x[idx].copy(),
            "reward": self.reward[idx].copy(),
            "next_grid": self.next_grid[idx].astype(np.float64)[..., None],
            "next_logic": self.next_logic[idx].copy(),
            "done": self.done[idx].copy(),
        }

    def sample(self, rng: np.random.Generator, batch: int) -> dict:
        return self.batch(self.sample_indices(rng, batch))
