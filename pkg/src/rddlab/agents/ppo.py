"""Minimal PPO with separate extrinsic and intrinsic value heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rddlab.estimator import NonFiniteLossError
from rddlab.nn import AdamState, DenseNet, adam_step
from rddlab.rng import derive_seed


def gae(rewards, values, dones, gamma: float = 0.99, lam: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and returns.

    ``values`` has one more entry than ``rewards``: the last one bootstraps
    the state after the final transition (ignored when that transition is done).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if v.shape != (r.size + 1,) or d.shape != r.shape:
        raise ValueError(f"length mismatch: {r.size} rewards, {d.size} dones, {v.size} values (need rewards + 1)")
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(r.size - 1, -1, -1):
        notdone = 1.0 - d[t]
        delta = r[t] + gamma * v[t + 1] * notdone - v[t]
        running = delta + gamma * lam * notdone * running
        adv[t] = running
    return adv, adv + v[:-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class PpoConfig:
    hidden: int = 64
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    clip: float = 0.1
    epochs: int = 4
    n_minibatches: int = 4
    gamma: float = 0.99
    gamma_int: float = 0.99
    gae_lambda: float = 0.95
    beta: float = 1.0
    ent_coef: float = 0.0


class PpoAgent:
    def __init__(self, obs_dim: int, n_actions: int, config: PpoConfig = PpoConfig(), seed: int = 0):
        self.cfg = config
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        h = config.hidden
        self.policy = DenseNet.init([obs_dim, h, h, n_actions], derive_seed(seed, "policy"))
        # small final layer keeps the initial policy close to uniform
        self.policy.layers[-1].weight *= 0.01
        self.v_ext = DenseNet.init([obs_dim, h, h, 1], derive_seed(seed, "v_ext"))
        self.v_int = DenseNet.init([obs_dim, h, h, 1], derive_seed(seed, "v_int"))
        self.opt_pi = AdamState.for_net(self.policy, lr=config.lr_actor)
        self.opt_ve = AdamState.for_net(self.v_ext, lr=config.lr_critic)
        self.opt_vi = AdamState.for_net(self.v_int, lr=config.lr_critic)

    def probs(self, obs) -> np.ndarray:
        return softmax(self.policy.forward(obs))

    def values(self, obs) -> tuple[np.ndarray, np.ndarray]:
        return self.v_ext.forward(obs)[..., 0], self.v_int.forward(obs)[..., 0]

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions for a batch of observations; returns ``(actions, logp, v_ext, v_int)``."""
        logits = self.policy.forward(obs)
        p = softmax(logits)
        u = rng.random(p.shape[0])
        actions = np.minimum((p.cumsum(axis=1) < u[:, None]).sum(axis=1), self.n_actions - 1)
        logp = log_softmax(logits)[np.arange(p.shape[0]), actions]
        ve, vi = self.values(obs)
        return actions, logp, ve, vi

    def greedy(self, obs: np.ndarray) -> np.ndarray:
        return np.argmax(self.policy.forward(obs), axis=-1)

    def update(self, obs, actions, advantages, ret_ext, ret_int, rng: np.random.Generator) -> dict:
        """K epochs of clipped-surrogate ascent and value regression.

        ``advantages`` is the combined (already weighted) advantage; it is
        standardised here. Old log-probabilities are taken from the current
        parameters before the first step, on exactly the rows and batch
        shapes used by the first epoch, so that epoch starts at ratio 1.
        """
        cfg = self.cfg
        obs = np.asarray(obs, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        adv = np.asarray(advantages, dtype=np.float64)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = obs.shape[0]
        n_mb = max(1, min(cfg.n_minibatches, n))
        perms = [rng.permutation(n) for _ in range(cfg.epochs)]
        old_logp = np.empty(n)
        for idx in np.array_split(perms[0], n_mb):
            old_logp[idx] = log_softmax(self.policy.forward(obs[idx]))[np.arange(idx.size), actions[idx]]

        stats = {"policy_loss": 0.0, "v_ext_loss": 0.0, "v_int_loss": 0.0, "clip_frac": 0.0}
        first_ratios = []
        first_surrogate = None
        steps = 0
        for epoch, perm in enumerate(perms):
            for idx in np.array_split(perm, n_mb):
                b = idx.size
                logits, cache = self.policy.forward_cached(obs[idx])
                logp_all = log_softmax(logits)
                p = np.exp(logp_all)
                act = actions[idx]
                ratio = np.exp(logp_all[np.arange(b), act] - old_logp[idx])
                a = adv[idx]
                unclipped = ratio * a
                clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a
                surrogate = np.minimum(unclipped, clipped)
                if epoch == 0:
                    first_ratios.append(ratio)
                    if first_surrogate is None:
                        first_surrogate = float(surrogate.mean())
                # gradient flows only through samples where the unclipped term is the minimum
                active = unclipped <= clipped
                onehot = np.zeros_like(p)
                onehot[np.arange(b), act] = 1.0
                coef = np.where(active, ratio * a, 0.0)
                g_logits = -(coef[:, None] * (onehot - p)) / b
                entropy = -(p * logp_all).sum(axis=1)
                if cfg.ent_coef:
                    g_logits += cfg.ent_coef * p * (logp_all + entropy[:, None]) / b
                pl = -float(surrogate.mean()) - cfg.ent_coef * float(entropy.mean())
                adam_step(self.policy, self.policy.backward(cache, g_logits), self.opt_pi)

                vl_e = self._value_step(self.v_ext, self.opt_ve, obs[idx], ret_ext[idx])
                vl_i = self._value_step(self.v_int, self.opt_vi, obs[idx], ret_int[idx])
                for key, val in (("policy_loss", pl), ("v_ext_loss", vl_e), ("v_int_loss", vl_i)):
                    if not np.isfinite(val):
                        raise NonFiniteLossError(f"PPO {key} is {val}")
                    stats[key] += val
                stats["clip_frac"] += float(np.mean(~active))
                steps += 1
        for key in stats:
            stats[key] /= steps
        stats["first_surrogate"] = first_surrogate
        stats["first_minibatch_ratios"] = first_ratios[0]
        return stats

    @staticmethod
    def _value_step(net: DenseNet, opt: AdamState, obs, target) -> float:
        out, cache = net.forward_cached(obs)
        diff = out[:, 0] - np.asarray(target, dtype=np.float64)
        loss = float(np.mean(diff * diff))
        adam_step(net, net.backward(cache, (2.0 / diff.size) * diff[:, None]), opt)
        return loss
