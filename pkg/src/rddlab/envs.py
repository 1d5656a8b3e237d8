"""Sparse-reward environments small enough to run on a laptop.

All three expose the same minimal surface: ``reset(seed=None) -> obs``,
``step(action) -> (obs, reward, done)``, ``obs_dim``, ``n_actions`` and, for
the tabular ones, ``state_index``/``n_states``.
"""

from __future__ import annotations

import math

import numpy as np

from rddlab.rng import make_rng


class InvalidActionError(ValueError):
    pass


def _check_action(action, n_actions: int) -> int:
    a = int(action)
    if a != action or not 0 <= a < n_actions:
        raise InvalidActionError(f"action {action!r} not in range(0, {n_actions})")
    return a


class ChainEnv:
    """Walk right along ``length`` states; reward 1 only on reaching the last one.

    Actions: 0 = left, 1 = right.
    """

    n_actions = 2

    def __init__(self, length: int = 40, horizon: int | None = None, obs: str = "compact"):
        if length < 2:
            raise ValueError("chain length must be >= 2")
        if obs not in ("compact", "onehot"):
            raise ValueError(f"obs must be 'compact' or 'onehot', got {obs!r}")
        self.length = length
        self.horizon = horizon if horizon is not None else 2 * length
        self.obs_mode = obs
        self.position = 0
        self.steps = 0

    @property
    def obs_dim(self) -> int:
        return 1 if self.obs_mode == "compact" else self.length

    @property
    def n_states(self) -> int:
        return self.length

    @property
    def state_index(self) -> int:
        return self.position

    @property
    def at_goal(self) -> bool:
        return self.position == self.length - 1

    def observe(self) -> np.ndarray:
        if self.obs_mode == "onehot":
            o = np.zeros(self.length)
            o[self.position] = 1.0
            return o
        return np.array([2.0 * self.position / (self.length - 1) - 1.0])

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.position = 0
        self.steps = 0
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = _check_action(action, self.n_actions)
        self.position = min(max(self.position + (1 if a == 1 else -1), 0), self.length - 1)
        self.steps += 1
        reward = 1.0 if self.at_goal else 0.0
        return self.observe(), reward, self.at_goal or self.steps >= self.horizon


def default_walls(width: int, height: int) -> frozenset[tuple[int, int]]:
    """A single interior wall down the middle column with two doorways."""
    x = width // 2
    doors = {height // 4, (3 * height) // 4}
    return frozenset((x, y) for y in range(height) if y not in doors)


class GridEnv:
    """Gridworld from (0, 0) to the far corner; reward 1 only at the goal.

    Actions: 0 = +y, 1 = -y, 2 = -x, 3 = +x. Moves into walls or off the grid
    leave the agent in place.
    """

    n_actions = 4
    _moves = ((0, 1), (0, -1), (-1, 0), (1, 0))

    def __init__(self, width: int = 21, height: int = 21, walls=None, horizon: int | None = None,
                 obs: str = "compact"):
        self.width = width
        self.height = height
        self.walls = frozenset(default_walls(width, height) if walls is None else walls)
        self.goal = (width - 1, height - 1)
        if (0, 0) in self.walls or self.goal in self.walls:
            raise ValueError("start and goal cells must not be walls")
        self.horizon = horizon if horizon is not None else 4 * (width + height)
        self.obs_mode = obs
        self.cell = (0, 0)
        self.steps = 0

    @property
    def obs_dim(self) -> int:
        return 2 if self.obs_mode == "compact" else self.width * self.height

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def state_index(self) -> int:
        return self.cell[1] * self.width + self.cell[0]

    @property
    def at_goal(self) -> bool:
        return self.cell == self.goal

    def observe(self) -> np.ndarray:
        if self.obs_mode == "onehot":
            o = np.zeros(self.n_states)
            o[self.state_index] = 1.0
            return o
        x, y = self.cell
        return np.array([2.0 * x / (self.width - 1) - 1.0, 2.0 * y / (self.height - 1) - 1.0])

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.cell = (0, 0)
        self.steps = 0
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = _check_action(action, self.n_actions)
        dx, dy = self._moves[a]
        nx, ny = self.cell[0] + dx, self.cell[1] + dy
        if 0 <= nx < self.width and 0 <= ny < self.height and (nx, ny) not in self.walls:
            self.cell = (nx, ny)
        self.steps += 1
        reward = 1.0 if self.at_goal else 0.0
        return self.observe(), reward, self.at_goal or self.steps >= self.horizon


class MountainCarEnv:
    """Classic-control mountain car with a sparse +1 on reaching ``position >= 0.5``.

    Actions: 0 = push left, 1 = coast, 2 = push right.
    """

    n_actions = 3
    obs_dim = 2
    min_position, max_position = -1.2, 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    def __init__(self, seed: int = 0, horizon: int = 200):
        self.horizon = horizon
        self.rng = make_rng(seed)
        self.position = -0.5
        self.velocity = 0.0
        self.steps = 0

    @property
    def at_goal(self) -> bool:
        return self.position >= self.goal_position

    def observe(self) -> np.ndarray:
        span = self.max_position - self.min_position
        return np.array([2.0 * (self.position - self.min_position) / span - 1.0, self.velocity / self.max_speed])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = make_rng(seed)
        self.position = float(self.rng.uniform(-0.6, -0.4))
        self.velocity = 0.0
        self.steps = 0
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        a = _check_action(action, self.n_actions)
        v = self.velocity + (a - 1) * self.force - self.gravity * math.cos(3.0 * self.position)
        v = min(max(v, -self.max_speed), self.max_speed)
        p = min(max(self.position + v, self.min_position), self.max_position)
        if p == self.min_position and v < 0:
            v = 0.0
        self.position, self.velocity = p, v
        self.steps += 1
        reward = 1.0 if self.at_goal else 0.0
        return self.observe(), reward, self.at_goal or self.steps >= self.horizon


ENVS = ("chain", "grid", "mountaincar")


def make_env(name: str, seed: int = 0, **kwargs):
    if name == "chain":
        return ChainEnv(**kwargs)
    if name == "grid":
        return GridEnv(**kwargs)
    if name == "mountaincar":
        return MountainCarEnv(seed=seed, **kwargs)
    raise ValueError(f"unknown env {name!r}; valid options: {', '.join(ENVS)}")


def xpos_density(positions, bins: int = 50, window: int = 20_000, low: float = MountainCarEnv.min_position,
                 high: float = MountainCarEnv.max_position) -> tuple[np.ndarray, np.ndarray]:
    """Per-window normalised histograms of positions.

    Returns ``(density, edges)`` where ``density`` has one row per window of
    ``window`` consecutive entries (a trailing partial window is kept) and each
    row sums to 1.
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size == 0:
        raise ValueError("no positions to histogram")
    if bins < 1 or window < 1:
        raise ValueError("bins and window must be positive")
    edges = np.linspace(low, high, bins + 1)
    rows = []
    for start in range(0, pos.size, window):
        chunk = pos[start:start + window]
        counts, _ = np.histogram(np.clip(chunk, low, high), bins=edges)
        rows.append(counts / chunk.size)
    return np.array(rows), edges
