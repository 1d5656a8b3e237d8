"""Reference estimators: RND, finite-N DRND and exact visit counts."""

from __future__ import annotations

from typing import Callable

import numpy as np

from rddlab.estimator import (
    BonusEstimator,
    DistillingEstimator,
    NoBonus,
    _check_batch,
    as_batch,
    state_key,
)
from rddlab.nn import AdamState, DenseNet
from rddlab.rdd import RddEstimator, TargetSpec
from rddlab.rng import derive_seed, make_rng, rng_state, set_rng_state

DRND_CLAMP = 1e-8


class RndEstimator(DistillingEstimator):
    """Predictor regressed onto a frozen random target network.

    ``target`` may be any callable mapping a ``(B, obs_dim)`` batch to
    ``(B, d)``; by default a fresh random :class:`DenseNet` is built.
    """

    kind = "rnd"

    def __init__(self, obs_dim: int, d: int = 64, hidden: int = 64, lr: float = 3e-4, seed: int = 0,
                 target: DenseNet | Callable[[np.ndarray], np.ndarray] | None = None):
        self.obs_dim = obs_dim
        self.d = d
        if target is None:
            target = DenseNet.init([obs_dim, hidden, hidden, d], derive_seed(seed, "target"))
        self.target = target
        self.predictor = DenseNet.init([obs_dim, hidden, hidden, d], derive_seed(seed, "predictor"))
        self.opt = AdamState.for_net(self.predictor, lr=lr)

    def target_output(self, states) -> np.ndarray:
        s, single = as_batch(states)
        out = self.target.forward(s) if isinstance(self.target, DenseNet) else np.asarray(self.target(s))
        return out[0] if single else out

    def bonus(self, states):
        s, single = as_batch(states)
        diff = self.predictor.forward(s) - self.target_output(s)
        b = np.einsum("ij,ij->i", diff, diff) / self.d
        return float(b[0]) if single else b

    def train(self, batch) -> float:
        b = _check_batch(batch)
        targets = self.target_output(b)
        total = 0.0
        for x, t in zip(b, targets):
            total += self._distill_step(x, t)
        return total / len(b)

    def state_dict(self):
        arrays, meta = {}, {}
        self._net_state("predictor", self.predictor, self.opt, arrays, meta)
        if isinstance(self.target, DenseNet):
            self._net_state("target", self.target, None, arrays, meta)
        return arrays, meta

    def load_state_dict(self, arrays, meta) -> None:
        self._load_net_state("predictor", self.predictor, self.opt, arrays, meta)
        if isinstance(self.target, DenseNet):
            self._load_net_state("target", self.target, None, arrays, meta)


def rnd_bonus(est: RndEstimator, state) -> float:
    return est.bonus(state)


class _StackedNets:
    """N same-shaped DenseNets evaluated together: ``(B, obs) -> (B, N, d)``."""

    def __init__(self, nets: list[DenseNet]):
        self.weights = [np.stack([n.layers[k].weight for n in nets]) for k in range(len(nets[0].layers))]
        self.biases = [np.stack([n.layers[k].bias for n in nets]) for k in range(len(nets[0].layers))]
        self.acts = [l.activation for l in nets[0].layers]

    def __call__(self, s: np.ndarray) -> np.ndarray:
        h = np.broadcast_to(s[None], (self.weights[0].shape[0],) + s.shape)  # (N, B, in)
        for w, b, act in zip(self.weights, self.biases, self.acts):
            h = np.matmul(h, w) + b[:, None, :]
            if act == "relu":
                h = np.maximum(h, 0.0)
            elif act == "tanh":
                h = np.tanh(h)
        return np.transpose(h, (1, 0, 2))


class DrndEstimator(DistillingEstimator):
    """N frozen targets; the predictor fits a uniformly chosen one per presentation.

    ``target_mode="random_net"`` uses N random networks. ``"gaussian"`` draws
    each state's N target outputs i.i.d. from ``N(mu, sigma^2)`` (seeded by the
    exact state features), i.e. the targets are samples of the RDD distribution.
    """

    kind = "drnd"

    def __init__(self, obs_dim: int, n_targets: int = 10, d: int = 64, hidden: int = 64, lr: float = 3e-4,
                 seed: int = 0, target_mode: str = "random_net", mu: float = 1.0, sigma: float = 1.0):
        if n_targets < 2:
            raise ValueError(f"DRND needs at least 2 target networks, got N={n_targets}")
        if target_mode not in ("random_net", "gaussian"):
            raise ValueError(f"unknown DRND target_mode {target_mode!r}")
        self.obs_dim = obs_dim
        self.n_targets = int(n_targets)
        self.d = d
        self.seed = seed
        self.target_mode = target_mode
        self.mu = mu
        self.sigma = sigma
        self._stack = None
        if target_mode == "random_net":
            nets = [DenseNet.init([obs_dim, hidden, hidden, d], derive_seed(seed, "target", i))
                    for i in range(self.n_targets)]
            self._stack = _StackedNets(nets)
        self._cache: dict[bytes, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.predictor = DenseNet.init([obs_dim, hidden, hidden, d], derive_seed(seed, "predictor"))
        self.opt = AdamState.for_net(self.predictor, lr=lr)
        self.rng = make_rng(derive_seed(seed, "assign"))
        self.choice_counts = np.zeros(self.n_targets, dtype=np.int64)

    def _gaussian_entry(self, x: np.ndarray):
        key = x.tobytes()
        entry = self._cache.get(key)
        if entry is None:
            words = np.frombuffer(np.ascontiguousarray(x, dtype=np.float64).tobytes(), dtype=np.uint64)
            rng = make_rng(derive_seed(self.seed, "gaussian-targets", *(int(w) for w in words)))
            outs = self.mu + self.sigma * rng.standard_normal((self.n_targets, self.d))
            entry = (outs, outs.mean(axis=0), (outs * outs).mean(axis=0))
            self._cache[key] = entry
        return entry

    def target_outputs(self, states) -> np.ndarray:
        """All N target outputs, shape ``(B, N, d)``."""
        s, single = as_batch(states)
        if self._stack is not None:
            out = self._stack(s)
        else:
            out = np.stack([self._gaussian_entry(x)[0] for x in s])
        return out[0] if single else out

    def moments(self, states) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension first and second moments across the N targets."""
        s, single = as_batch(states)
        if self._stack is not None:
            outs = self._stack(s)
            mean, second = outs.mean(axis=1), (outs * outs).mean(axis=1)
        else:
            entries = [self._gaussian_entry(x) for x in s]
            mean = np.stack([e[1] for e in entries])
            second = np.stack([e[2] for e in entries])
        return (mean[0], second[0]) if single else (mean, second)

    def _prediction(self, s: np.ndarray, f) -> np.ndarray:
        if f is None:
            return self.predictor.forward(s)
        f = np.asarray(f, dtype=np.float64)
        return f[None, :] if f.ndim == 1 else f

    def y_empirical(self, states, f=None):
        """Rooted DRND statistic, clamped per dimension and averaged over d.

        ``f`` overrides the predictor output (e.g. with an exact running mean).
        """
        s, single = as_batch(states)
        mean, second = self.moments(s)
        pred = self._prediction(s, f)
        num = np.maximum(pred * pred - mean * mean, DRND_CLAMP)
        den = np.maximum(second - mean * mean, DRND_CLAMP)
        y = np.sqrt(num / den).mean(axis=-1)
        return float(y[0]) if single else y

    def y_squared(self, states, f=None):
        """Un-rooted ratio ``(f^2 - mu^2) / (B2 - mu^2)`` averaged over d; tracks ``1/n``."""
        s, single = as_batch(states)
        mean, second = self.moments(s)
        pred = self._prediction(s, f)
        den = np.maximum(second - mean * mean, DRND_CLAMP)
        y = ((pred * pred - mean * mean) / den).mean(axis=-1)
        return float(y[0]) if single else y

    def bonus(self, states):
        return self.y_empirical(states)

    def choose_target(self) -> int:
        i = int(self.rng.integers(self.n_targets))
        self.choice_counts[i] += 1
        return i

    def train(self, batch) -> float:
        b = _check_batch(batch)
        outs = self.target_outputs(b)
        total = 0.0
        for x, o in zip(b, outs):
            total += self._distill_step(x, o[self.choose_target()])
        return total / len(b)

    def state_dict(self):
        arrays = {"choice_counts": self.choice_counts.astype(np.float64)}
        meta = {"rng": rng_state(self.rng), "n_targets": self.n_targets, "target_mode": self.target_mode}
        self._net_state("predictor", self.predictor, self.opt, arrays, meta)
        return arrays, meta

    def load_state_dict(self, arrays, meta) -> None:
        if meta["n_targets"] != self.n_targets or meta["target_mode"] != self.target_mode:
            raise ValueError("snapshot DRND configuration does not match this estimator")
        self._load_net_state("predictor", self.predictor, self.opt, arrays, meta)
        self.choice_counts = arrays["choice_counts"].astype(np.int64)
        set_rng_state(self.rng, meta["rng"])

    def describe(self) -> dict:
        return {"estimator": self.kind, "drnd_n": self.n_targets, "drnd_target_mode": self.target_mode,
                "drnd_aggregation": "per-dimension mean"}


def drnd_y_empirical(est: DrndEstimator, state, f=None) -> float:
    return est.y_empirical(state, f)


class CountEstimator(BonusEstimator):
    """Exact visit counts; bonus ``1/n`` (or ``1/sqrt(n)``), 1 for unseen states."""

    kind = "count"

    def __init__(self, bins: int = 64, low: float = -1.0, high: float = 1.0, sqrt: bool = False,
                 exact_keys: bool = False):
        self.bins = bins
        self.low = low
        self.high = high
        self.sqrt = sqrt
        self.exact_keys = exact_keys
        self.counts: dict[tuple, int] = {}

    def key(self, state) -> tuple:
        if self.exact_keys:
            return tuple(float(v) for v in np.atleast_1d(state))
        return state_key(state, self.bins, self.low, self.high)

    def count(self, state) -> int:
        return self.counts.get(self.key(state), 0)

    def _one(self, state) -> float:
        n = max(self.count(state), 1)
        return 1.0 / np.sqrt(n) if self.sqrt else 1.0 / n

    def bonus(self, states):
        s, single = as_batch(states)
        b = np.array([self._one(x) for x in s])
        return float(b[0]) if single else b

    def train(self, batch) -> float:
        for x in _check_batch(batch):
            k = self.key(x)
            self.counts[k] = self.counts.get(k, 0) + 1
        return 0.0

    def state_dict(self):
        return {}, {"counts": [[list(k), n] for k, n in self.counts.items()], "sqrt": self.sqrt}

    def load_state_dict(self, arrays, meta) -> None:
        self.counts = {tuple(k): int(n) for k, n in meta["counts"]}

    def describe(self) -> dict:
        return {"estimator": self.kind, "count_form": "1/sqrt(n)" if self.sqrt else "1/n", "count_bins": self.bins}


def count_bonus(est: CountEstimator, state) -> float:
    return est.bonus(state)


def train_step(est: BonusEstimator, batch) -> float:
    return est.train(batch)


ESTIMATORS = ("rdd", "rnd", "drnd", "count", "none")


def make_estimator(kind: str, obs_dim: int, *, seed: int = 0, mu: float = 1.0, sigma: float = 1.0, d: int = 64,
                   hidden: int = 64, lr: float = 3e-4, drnd_n: int = 10, count_sqrt: bool = False,
                   count_bins: int = 64, mean_mode: str = "constant") -> BonusEstimator:
    if kind == "rdd":
        return RddEstimator(obs_dim, TargetSpec(mu=mu, sigma=sigma, d=d, seed=seed, mean_mode=mean_mode),
                            hidden=hidden, lr=lr)
    if kind == "rnd":
        return RndEstimator(obs_dim, d=d, hidden=hidden, lr=lr, seed=seed)
    if kind == "drnd":
        return DrndEstimator(obs_dim, n_targets=drnd_n, d=d, hidden=hidden, lr=lr, seed=seed)
    if kind == "count":
        return CountEstimator(bins=count_bins, sqrt=count_sqrt)
    if kind == "none":
        return NoBonus()
    raise ValueError(f"unknown estimator {kind!r}; valid options: {', '.join(ESTIMATORS)}")
