"""Visit-count statistics and their closed-form moments.

``z`` is the squared distance of a running sample mean from the target mean,
scaled by the target variance; it is an unbiased estimate of ``1/n`` with
variance ``2/n**2`` (divided by ``d`` when averaged over ``d`` independent
output dimensions). ``y_population`` is the second-moment based alternative
whose variance carries an extra ``4 mu**2 / (n sigma**2)`` term.
"""

from __future__ import annotations

import math

import numpy as np


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0 for the statistic to be defined, got {sigma}")


def z_statistic(sample_mean, mu: float, sigma: float, d: int | None = None) -> float:
    """``||sample_mean - mu * 1_d||^2 / (d sigma^2)``."""
    _check_sigma(sigma)
    m = np.atleast_1d(np.asarray(sample_mean, dtype=np.float64))
    if d is None:
        d = m.shape[-1]
    elif m.shape[-1] != d:
        raise ValueError(f"sample_mean has {m.shape[-1]} dims, expected d={d}")
    diff = m - mu
    return float(np.dot(diff, diff) / (d * sigma * sigma))


def z_statistic_batch(sample_means: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    """Row-wise :func:`z_statistic` for a ``(trials, d)`` array."""
    _check_sigma(sigma)
    m = np.asarray(sample_means, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    diff = m - mu
    return np.einsum("ij,ij->i", diff, diff) / (m.shape[1] * sigma * sigma)


def y_statistic_population(sample_mean, mu: float, sigma: float):
    """``(sample_mean^2 - mu^2) / sigma^2``; averaged over the last axis if vector valued.

    Can be negative for finite samples. Its expectation is ``1/n``.
    """
    _check_sigma(sigma)
    m = np.asarray(sample_mean, dtype=np.float64)
    val = (m * m - mu * mu) / (sigma * sigma)
    if val.ndim == 0:
        return float(val)
    return val.mean(axis=-1) if val.ndim > 1 else float(val.mean())


def closed_form_var_z(n: int, d: int = 1) -> float:
    _check_n(n)
    return 2.0 / (n * n) / d


def closed_form_var_y(n: int, mu: float, sigma: float, d: int = 1) -> float:
    _check_n(n)
    _check_sigma(sigma)
    return (2.0 / (n * n) + 4.0 * mu * mu / (n * sigma * sigma)) / d


def moments_b234(mu: float, sigma: float) -> tuple[float, float, float]:
    """Raw moments E[X^2], E[X^3], E[X^4] of N(mu, sigma^2)."""
    s2 = sigma * sigma
    return (
        mu * mu + s2,
        mu**3 + 3.0 * mu * s2,
        mu**4 + 6.0 * mu * mu * s2 + 3.0 * s2 * s2,
    )


def concentration_epsilon(n: int, delta: float) -> float:
    """Radius eps with P(|z_n - 1/n| >= eps) <= 2 delta.

    Chebyshev on the chi-square diagonal part plus a Chernoff bound on the
    cross terms.
    """
    _check_n(n)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_term = math.log(2.0 / delta)
    return math.sqrt(2.0 / (delta * n**3)) + math.sqrt(log_term * (n * (n - 1) / 2.0 + log_term)) / n**2


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
