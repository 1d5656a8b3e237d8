"""Rollout loops that wire an environment, an agent and a bonus estimator together.

Bonuses are computed on ``s_{t+1}`` at collection time. Agents, environments
and estimators each draw from their own seeded stream, so switching the
estimator (or zeroing its scale) never perturbs the agent's randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rddlab.agents.normalizer import RunningNormalizer
from rddlab.agents.ppo import PpoAgent, gae
from rddlab.agents.qlearn import QTable, q_update
from rddlab.estimator import BonusEstimator, NoBonus, state_key
from rddlab.rng import derive_seed, make_rng


@dataclass
class EpisodeRecord:
    global_step: int
    episode_index: int
    episode_return_ext: float
    mean_bonus: float
    visited_state_count: int
    success: bool
    eval_return: float | None = None


class VisitTracker:
    """Distinct grid cells seen so far (64 bins per feature by default)."""

    def __init__(self, bins: int = 64):
        self.bins = bins
        self.seen: set[tuple] = set()

    def add(self, obs) -> None:
        self.seen.add(state_key(obs, self.bins))

    def __len__(self) -> int:
        return len(self.seen)


def run_qlearning(env, table: QTable, estimator: BonusEstimator | None, episodes: int, seed: int = 0,
                  eval_every: int = 0, on_episode=None):
    """Train for ``episodes`` episodes; returns the list of :class:`EpisodeRecord`.

    The estimator is queried on every next state and trained on it right
    after the TD update (the tabular update phase is a single step).
    """
    estimator = estimator or NoBonus()
    rng = make_rng(derive_seed(seed, "qlearn"))
    visits = VisitTracker()
    records = []
    global_step = 0
    for ep in range(episodes):
        obs = env.reset()
        visits.add(obs)
        s = env.state_index
        ret, bonus_sum, steps, done = 0.0, 0.0, 0, False
        success = False
        while not done:
            a = table.act(s, rng)
            obs2, r, done = env.step(a)
            s2 = env.state_index
            b = float(estimator.bonus(obs2))
            q_update(table, s, a, r, s2, done and env.at_goal, bonus=b)
            estimator.train(obs2[None, :])
            visits.add(obs2)
            success = success or env.at_goal
            ret += r
            bonus_sum += b
            steps += 1
            global_step += 1
            s = s2
        rec = EpisodeRecord(global_step, ep, ret, bonus_sum / max(steps, 1), len(visits), success)
        if eval_every and (ep + 1) % eval_every == 0:
            rec.eval_return = greedy_episode_return(env, table)
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
    return records


def greedy_episode_return(env, table: QTable) -> float:
    env.reset()
    s, ret, done = env.state_index, 0.0, False
    while not done:
        _, r, done = env.step(table.greedy(s))
        s = env.state_index
        ret += r
    return ret


@dataclass
class Trajectory:
    """Round-robin rollout of M environments for T steps, arrays shaped ``(M, T, ...)``."""

    obs: np.ndarray
    actions: np.ndarray
    r_ext: np.ndarray
    r_int: np.ndarray
    dones: np.ndarray
    logp: np.ndarray
    v_ext: np.ndarray
    v_int: np.ndarray
    next_obs: np.ndarray
    last_v_ext: np.ndarray
    last_v_int: np.ndarray

    def __post_init__(self):
        m, t = self.actions.shape
        for name in ("r_ext", "r_int", "dones", "logp", "v_ext", "v_int"):
            if getattr(self, name).shape != (m, t):
                raise ValueError(f"trajectory field {name} has shape {getattr(self, name).shape}, expected {(m, t)}")


@dataclass
class PpoRunner:
    """Owns the environments and bookkeeping for one PPO training run."""

    agent: PpoAgent
    envs: list
    estimator: BonusEstimator = field(default_factory=NoBonus)
    seed: int = 0
    beta: float | None = None
    record_positions: bool = False

    def __post_init__(self):
        self.rng = make_rng(derive_seed(self.seed, "ppo"))
        self.normalizer = RunningNormalizer()
        self.visits = VisitTracker()
        self.obs = np.stack([env.reset() for env in self.envs])
        for o in self.obs:
            self.visits.add(o)
        self.global_step = 0
        self.episode_index = 0
        self._ep_ret = np.zeros(len(self.envs))
        self._ep_bonus = np.zeros(len(self.envs))
        self._ep_len = np.zeros(len(self.envs), dtype=np.int64)
        self._ep_success = np.zeros(len(self.envs), dtype=bool)
        self.positions: list[float] = []
        if self.beta is None:
            self.beta = self.agent.cfg.beta

    def collect(self, steps: int) -> tuple[Trajectory, list[EpisodeRecord]]:
        m = len(self.envs)
        od = self.agent.obs_dim
        obs = np.zeros((m, steps, od))
        next_obs = np.zeros((m, steps, od))
        actions = np.zeros((m, steps), dtype=np.int64)
        r_ext, r_int, dones, logp, v_ext, v_int = (np.zeros((m, steps)) for _ in range(6))
        records = []
        for t in range(steps):
            a, lp, ve, vi = self.agent.act(self.obs, self.rng)
            obs[:, t] = self.obs
            actions[:, t], logp[:, t], v_ext[:, t], v_int[:, t] = a, lp, ve, vi
            for i, env in enumerate(self.envs):
                o2, r, done = env.step(int(a[i]))
                self.global_step += 1
                next_obs[i, t] = o2
                r_ext[i, t] = r
                dones[i, t] = float(done)
                self.visits.add(o2)
                if self.record_positions:
                    self.positions.append(float(env.position))
                self._ep_ret[i] += r
                self._ep_len[i] += 1
                self._ep_success[i] |= bool(getattr(env, "at_goal", False))
                if done:
                    o2 = env.reset()
                    self.visits.add(o2)
                self.obs[i] = o2
            b = np.asarray(self.estimator.bonus(next_obs[:, t]), dtype=np.float64)
            r_int[:, t] = b
            self._ep_bonus += b
            for i in range(m):
                if dones[i, t]:
                    records.append(EpisodeRecord(
                        self.global_step - (m - 1 - i), self.episode_index, float(self._ep_ret[i]),
                        float(self._ep_bonus[i] / self._ep_len[i]), len(self.visits), bool(self._ep_success[i])))
                    self.episode_index += 1
                    self._ep_ret[i] = self._ep_bonus[i] = 0.0
                    self._ep_len[i] = 0
                    self._ep_success[i] = False
        lv_e, lv_i = self.agent.values(self.obs)
        traj = Trajectory(obs, actions, r_ext, r_int, dones, logp, v_ext, v_int, next_obs, lv_e, lv_i)
        return traj, records

    def advantages(self, traj: Trajectory):
        """Normalise intrinsic rewards, run GAE on both streams, combine."""
        cfg = self.agent.cfg
        if isinstance(self.estimator, NoBonus):
            adv_e, ret_e = self._gae_stream(traj.r_ext, traj.v_ext, traj.last_v_ext, traj.dones, cfg.gamma)
            return adv_e, ret_e, np.zeros_like(ret_e)
        self.normalizer.update(traj.r_int)
        r_int = self.normalizer.normalize(traj.r_int)
        adv_e, ret_e = self._gae_stream(traj.r_ext, traj.v_ext, traj.last_v_ext, traj.dones, cfg.gamma)
        adv_i, ret_i = self._gae_stream(r_int, traj.v_int, traj.last_v_int, traj.dones, cfg.gamma_int)
        return adv_e + self.beta * adv_i, ret_e, ret_i

    def _gae_stream(self, rewards, values, last_values, dones, gamma):
        adv, ret = np.zeros_like(rewards), np.zeros_like(rewards)
        for i in range(rewards.shape[0]):
            adv[i], ret[i] = gae(rewards[i], np.append(values[i], last_values[i]), dones[i],
                                 gamma, self.agent.cfg.gae_lambda)
        return adv, ret

    def update(self, traj: Trajectory) -> dict:
        adv, ret_e, ret_i = self.advantages(traj)
        od = self.agent.obs_dim
        stats = self.agent.update(traj.obs.reshape(-1, od), traj.actions.ravel(), adv.ravel(),
                                  ret_e.ravel(), ret_i.ravel(), self.rng)
        stats["bonus_loss"] = float(self.estimator.train(traj.next_obs.reshape(-1, od)))
        return stats


def collect_rollout(runner: PpoRunner, steps: int):
    return runner.collect(steps)
