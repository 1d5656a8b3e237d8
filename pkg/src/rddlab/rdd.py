"""Random distribution distillation.

The predictor is regressed onto a fresh Gaussian draw ``N(mean(s) 1_d, sigma^2 1_d)``
every time a state is presented. Its least-squares optimum after ``n`` visits
is the running mean of the draws, so ``||f(s) - mean(s)||^2 / d`` shrinks like
``sigma^2 / n`` for well-fit states and stays large for novel ones.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Hashable

import numpy as np

from rddlab.estimator import DistillingEstimator, _check_batch, as_batch
from rddlab.nn import AdamState, DenseNet
from rddlab.rng import derive_seed, make_rng, rng_state, set_rng_state
from rddlab.stats import z_statistic

MEAN_MODES = ("constant", "random_net")


@dataclass(frozen=True)
class TargetSpec:
    """Target distribution ``N(mean(s) * 1_d, sigma^2 * 1_d)``.

    ``sigma == 0`` is the degenerate RND-limit mode: every draw equals the mean.
    """

    mu: float = 1.0
    sigma: float = 1.0
    d: int = 64
    seed: int = 0
    mean_mode: str = "constant"

    def __post_init__(self):
        if self.mean_mode not in MEAN_MODES:
            raise ValueError(f"mean_mode must be one of {MEAN_MODES}, got {self.mean_mode!r}")
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")

    @property
    def rnd_limit(self) -> bool:
        return self.sigma == 0.0


def sample_target(spec: TargetSpec, rng: np.random.Generator, mean=None) -> np.ndarray:
    """One draw of the ``d``-dimensional target; ``mean`` defaults to ``mu * 1_d``."""
    if mean is None:
        mean = np.full(spec.d, float(spec.mu))
    noise = rng.standard_normal(np.shape(mean))
    return mean + spec.sigma * noise


class RunningMeanOracle:
    """Exact least-squares optimum of the distillation loss: a per-state running mean."""

    def __init__(self):
        self.counts: dict[Hashable, int] = {}
        self.means: dict[Hashable, np.ndarray] = {}

    def ingest(self, key: Hashable, sample) -> "RunningMeanOracle":
        sample = np.asarray(sample, dtype=np.float64)
        n = self.counts.get(key, 0) + 1
        self.counts[key] = n
        if n == 1:
            self.means[key] = sample.copy()
        else:
            mean = self.means[key]
            mean += (sample - mean) / n
        return self

    def count(self, key: Hashable) -> int:
        return self.counts.get(key, 0)

    def mean(self, key: Hashable) -> np.ndarray:
        return self.means[key]


def ingest_oracle(oracle: RunningMeanOracle, key: Hashable, sampled_target) -> RunningMeanOracle:
    return oracle.ingest(key, sampled_target)


class RddEstimator(DistillingEstimator):
    kind = "rdd"

    def __init__(self, obs_dim: int, spec: TargetSpec = TargetSpec(), hidden: int = 64, lr: float = 3e-4,
                 predictor_seed: int | None = None):
        self.spec = spec
        self.d = spec.d
        self.obs_dim = obs_dim
        if predictor_seed is None:
            predictor_seed = derive_seed(spec.seed, "predictor")
        self.predictor = DenseNet.init([obs_dim, hidden, hidden, spec.d], predictor_seed)
        self.opt = AdamState.for_net(self.predictor, lr=lr)
        self.mean_net = None
        if spec.mean_mode == "random_net":
            self.mean_net = DenseNet.init([obs_dim, hidden, 1], derive_seed(spec.seed, "mean"))
        self.rng = make_rng(derive_seed(spec.seed, "samples"))

    def target_mean(self, states) -> np.ndarray:
        """Mean of the target distribution, shape ``(B, d)`` (or ``(d,)`` for one state)."""
        s, single = as_batch(states)
        if self.mean_net is None:
            mean = np.full((s.shape[0], self.d), float(self.spec.mu))
        else:
            mean = np.repeat(self.mean_net.forward(s), self.d, axis=1)
        return mean[0] if single else mean

    def sample_target(self, state) -> np.ndarray:
        return sample_target(self.spec, self.rng, self.target_mean(state))

    def bonus(self, states):
        """``||f(s) - mean(s)||^2 / d``; never uses a fresh sample."""
        s, single = as_batch(states)
        diff = self.predictor.forward(s) - self.target_mean(s)
        b = np.einsum("ij,ij->i", diff, diff) / self.d
        return float(b[0]) if single else b

    def visit_estimate(self, states):
        """Predictor-based estimate of ``1/n(s)``: the bonus divided by ``sigma^2``."""
        if self.spec.rnd_limit:
            raise ValueError("the visit estimate is undefined at sigma = 0; use bonus()")
        return self.bonus(states) / self.spec.sigma**2

    def z_exact(self, sample_mean, state) -> float:
        """Statistic of an exact running mean (e.g. from :class:`RunningMeanOracle`)."""
        # the per-state mean is one scalar broadcast over d
        mu = float(self.target_mean(state)[0])
        return z_statistic(sample_mean, mu, self.spec.sigma, self.d)

    def train(self, batch) -> float:
        """One Adam step per state on ``||f(s) - draw||^2 / d``; returns the mean loss."""
        b = _check_batch(batch)
        means = self.target_mean(b)
        total = 0.0
        for x, mean in zip(b, means):
            target = sample_target(self.spec, self.rng, mean)
            total += self._distill_step(x, target)
        return total / len(b)

    def state_dict(self):
        arrays: dict[str, np.ndarray] = {}
        meta: dict = {"spec": asdict(self.spec), "rng": rng_state(self.rng)}
        self._net_state("predictor", self.predictor, self.opt, arrays, meta)
        if self.mean_net is not None:
            self._net_state("mean_net", self.mean_net, None, arrays, meta)
        return arrays, meta

    def load_state_dict(self, arrays, meta) -> None:
        if TargetSpec(**meta["spec"]) != self.spec:
            raise ValueError("snapshot target spec does not match this estimator")
        self._load_net_state("predictor", self.predictor, self.opt, arrays, meta)
        if self.mean_net is not None:
            self._load_net_state("mean_net", self.mean_net, None, arrays, meta)
        set_rng_state(self.rng, meta["rng"])

    def describe(self) -> dict:
        return {"estimator": self.kind, **{f"target_{k}": v for k, v in asdict(self.spec).items()}}
