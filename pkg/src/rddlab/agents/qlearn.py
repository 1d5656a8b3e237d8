"""Tabular Q-learning on bonus-augmented rewards ``r + lam * b``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class QTable:
    n_states: int
    n_actions: int
    alpha: float = 0.5
    gamma: float = 0.99
    epsilon: float = 0.1
    lam: float = 1.0
    # soft target-update rate; only meaningful for a neural Q variant, kept for config parity
    tau: float = 0.005
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.q is None:
            self.q = np.zeros((self.n_states, self.n_actions))

    def greedy(self, s: int) -> int:
        # np.argmax returns the first maximum, i.e. ties go to the lowest action index
        return int(np.argmax(self.q[s]))

    def act(self, s: int, rng: np.random.Generator) -> int:
        if rng.random() < self.epsilon:
            return int(rng.integers(self.n_actions))
        return self.greedy(s)


def q_update(table: QTable, s: int, a: int, r: float, s_next: int, done: bool, bonus: float = 0.0) -> QTable:
    """One-step TD update towards ``r + lam*b + gamma * max_a' Q(s', a') * (1 - done)``."""
    bootstrap = 0.0 if done else table.gamma * float(np.max(table.q[s_next]))
    target = r + table.lam * bonus + bootstrap
    table.q[s, a] += table.alpha * (target - table.q[s, a])
    return table


def value_iteration(transitions, rewards, gamma: float, terminal=None, tol: float = 1e-12,
                    max_iter: int = 100_000) -> np.ndarray:
    """Q* of a deterministic MDP. ``transitions[s][a]`` -> next state, ``rewards[s][a]`` -> reward."""
    nxt = np.asarray(transitions, dtype=np.int64)
    rew = np.asarray(rewards, dtype=np.float64)
    term = np.zeros(nxt.shape, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
    q = np.zeros(rew.shape)
    for _ in range(max_iter):
        v = q.max(axis=1)
        new = rew + gamma * np.where(term, 0.0, v[nxt])
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q
