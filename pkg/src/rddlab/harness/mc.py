"""Brute-force Monte-Carlo oracle backing every derived expected value."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from rddlab.agents.normalizer import RunningNormalizer
from rddlab.rng import make_rng

Sampler = Callable[[np.random.Generator, int], np.ndarray]


class McResult(NamedTuple):
    mean: float
    variance: float
    se: float
    trials: int


def mc_oracle(sampler: Sampler, statistic: Callable[[np.ndarray], np.ndarray], trials: int, seed: int = 0,
              chunk: int = 50_000) -> McResult:
    """Stream ``statistic(sampler(rng, k))`` over ``trials`` draws.

    Mean and (unbiased) variance are merged chunk by chunk; ``se`` is the
    standard error of the mean.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    rng = make_rng(seed)
    acc = RunningNormalizer()
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        vals = np.asarray(statistic(sampler(rng, k)), dtype=np.float64).reshape(k)
        acc.update(vals)
        done += k
    var = acc.var * trials / (trials - 1)
    return McResult(acc.mean, var, float(np.sqrt(var / trials)), trials)


def visit_mean_sampler(n: int, mu: float, sigma: float, d: int = 1) -> Sampler:
    """Running mean of ``n`` explicit N(mu, sigma^2) draws per trial, shape ``(k, d)``."""

    def sample(rng: np.random.Generator, k: int) -> np.ndarray:
        return rng.normal(mu, sigma, size=(k, n, d)).mean(axis=1)

    return sample


def z_values(mu: float, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised z statistic written out directly (independent of ``rddlab.stats``)."""

    def stat(means: np.ndarray) -> np.ndarray:
        return ((means - mu) ** 2).mean(axis=1) / sigma**2

    return stat


def y_values(mu: float, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    def stat(means: np.ndarray) -> np.ndarray:
        return ((means**2 - mu**2) / sigma**2).mean(axis=1)

    return stat
