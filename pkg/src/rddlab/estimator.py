"""Common surface shared by every exploration-bonus estimator."""

from __future__ import annotations

import numpy as np

from rddlab.nn import AdamState, DenseNet, adam_step


class NonFiniteLossError(FloatingPointError):
    """Raised when training produces a NaN/inf loss; the CLI maps it to exit code 2."""


def state_key(features, bins: int = 64, low: float = -1.0, high: float = 1.0) -> tuple[int, ...]:
    """Fixed-grid discretisation of a feature vector into a hashable key."""
    x = np.atleast_1d(np.asarray(features, dtype=np.float64))
    idx = np.floor((x - low) / (high - low) * bins).astype(np.int64)
    return tuple(int(i) for i in np.clip(idx, 0, bins - 1))


class BonusEstimator:
    """Interface: ``bonus(states)``, ``train(batch)``, ``state_dict``/``load_state_dict``.

    ``bonus`` takes a single feature vector (returns a float) or a 2-D batch
    (returns an array) and must not mutate anything.
    """

    kind = "none"

    def bonus(self, states):
        raise NotImplementedError

    def train(self, batch) -> float:
        raise NotImplementedError

    def state_dict(self) -> tuple[dict[str, np.ndarray], dict]:
        return {}, {}

    def load_state_dict(self, arrays: dict[str, np.ndarray], meta: dict) -> None:
        pass

    def describe(self) -> dict:
        return {"estimator": self.kind}


class NoBonus(BonusEstimator):
    kind = "none"

    def bonus(self, states):
        s = np.asarray(states, dtype=np.float64)
        return 0.0 if s.ndim <= 1 else np.zeros(s.shape[0])

    def train(self, batch) -> float:
        _check_batch(batch)
        return 0.0


class DistillingEstimator(BonusEstimator):
    """Shared machinery for estimators that fit a predictor by per-state Adam steps."""

    predictor: DenseNet
    opt: AdamState
    d: int

    def _distill_step(self, x: np.ndarray, target: np.ndarray) -> float:
        out, cache = self.predictor.forward_cached(x)
        diff = out - target
        loss = float(diff @ diff) / self.d
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"{self.kind} distillation loss is {loss}")
        grads = self.predictor.backward(cache, (2.0 / self.d) * diff)
        adam_step(self.predictor, grads, self.opt)
        return loss

    def _net_state(self, prefix: str, net: DenseNet, opt: AdamState | None, arrays: dict, meta: dict) -> None:
        for i, p in enumerate(net.params()):
            arrays[f"{prefix}.p{i}"] = p
        if opt is not None:
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"{prefix}.m{i}"] = m
                arrays[f"{prefix}.v{i}"] = v
            meta[f"{prefix}.adam"] = {
                "step": opt.step, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
            }

    def _load_net_state(self, prefix: str, net: DenseNet, opt: AdamState | None, arrays: dict, meta: dict) -> None:
        n = len(net.params())
        net.load_params([arrays[f"{prefix}.p{i}"] for i in range(n)])
        if opt is not None:
            for i in range(n):
                opt.m[i][...] = arrays[f"{prefix}.m{i}"]
                opt.v[i][...] = arrays[f"{prefix}.v{i}"]
            a = meta[f"{prefix}.adam"]
            opt.step, opt.lr, opt.beta1, opt.beta2, opt.eps = a["step"], a["lr"], a["beta1"], a["beta2"], a["eps"]


def _check_batch(batch) -> np.ndarray:
    b = np.asarray(batch, dtype=np.float64)
    if b.size == 0 or (b.ndim >= 1 and b.shape[0] == 0):
        raise ValueError("training batch is empty")
    if b.ndim == 1:
        b = b[None, :]
    return b


def as_batch(states) -> tuple[np.ndarray, bool]:
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        return s[None, :], True
    return s, False
