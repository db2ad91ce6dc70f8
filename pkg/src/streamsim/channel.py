"""Bernoulli link model and the EWMA reliability estimator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_EWMA_ALPHA = 0.01


@dataclass
class BernoulliChannel:
    """Independent per-slot successes with probability ``reliability[n-1]`` for client ``n``.

    The engine draws one uniform per slot from the channel stream, so the
    outcome of slot ``t`` depends only on (seed, slot, scheduled client).
    """

    reliability: np.ndarray

    def __post_init__(self):
        self.reliability = np.asarray(self.reliability, dtype=float)
        if ((self.reliability <= 0) | (self.reliability > 1)).any():
            raise ValueError("reliabilities must lie in (0, 1]")

    def success(self, n: int, u: float) -> bool:
        return bool(u < self.reliability[n - 1])


def attempt(channel: BernoulliChannel, n: int, rng) -> bool:
    return channel.success(n, rng.random())


@dataclass
class ReliabilityEstimator:
    n_clients: int
    alpha: float = DEFAULT_EWMA_ALPHA
    initial: float = 1.0
    estimates: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("EWMA weight must lie in (0, 1)")
        if not 0 <= self.initial <= 1:
            raise ValueError("initial estimate must lie in [0, 1]")
        if self.estimates is None:
            self.estimates = np.full(self.n_clients, float(self.initial))

    def __getitem__(self, n: int) -> float:
        return float(self.estimates[n - 1])


def update_estimate(est: ReliabilityEstimator, n: int, success: bool) -> ReliabilityEstimator:
    """In-place EWMA update for client ``n``; returns ``est`` for chaining."""
    a = est.alpha
    est.estimates[n - 1] = (1 - a) * est.estimates[n - 1] + a * (1.0 if success else 0.0)
    return est
