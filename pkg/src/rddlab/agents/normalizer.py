from __future__ import annotations

import numpy as np


class RunningNormalizer:
    """Streaming mean/variance (Welford, merged batch-wise with Chan's update).

    ``normalize`` divides by the running standard deviation only, so
    non-negative bonuses stay non-negative.
    """

    def __init__(self, eps: float = 1e-8):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.eps = eps

    def update(self, values) -> "RunningNormalizer":
        x = np.asarray(values, dtype=np.float64).ravel()
        if x.size == 0:
            return self
        n_b = x.size
        mean_b = float(x.mean())
        m2_b = float(np.sum((x - mean_b) ** 2))
        n = self.count + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self._m2 += m2_b + delta * delta * self.count * n_b / n
        self.count = n
        return self

    @property
    def var(self) -> float:
        """Population variance of everything ingested so far."""
        return self._m2 / self.count if self.count else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.var))

    def normalize(self, values):
        return np.asarray(values, dtype=np.float64) / max(self.std, self.eps)
