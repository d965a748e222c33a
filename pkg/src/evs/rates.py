"""Stochastic pruning-rate sampler.

Rates are drawn from a Beta distribution parameterized by its mode m and a
concentration kappa > 2:

    alpha = m * (kappa - 2) + 1,   beta = (1 - m) * (kappa - 2) + 1

which pins the interior mode at exactly (alpha - 1) / (alpha + beta - 2) = m.
Draws use the ratio of two Gamma variates, X / (X + Y); the Gamma sampler
is Marsaglia-Tsang squeeze rejection fed only by the generator's uniforms
(normals come from a Box-Muller transform), so the stream is reproducible
from the seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BetaRateSpec:
    mode_target: float
    concentration: float = 20.0

    def __post_init__(self) -> None:
        if not 0.0 < self.mode_target < 1.0:
            raise ValueError(f"mode_target must be in (0, 1), got {self.mode_target}")
        if not self.concentration > 2.0:
            raise ValueError(
                f"concentration must be > 2 for the mode parameterization, "
                f"got {self.concentration}"
            )

    @property
    def alpha(self) -> float:
        return self.mode_target * (self.concentration - 2.0) + 1.0

    @property
    def beta(self) -> float:
        return (1.0 - self.mode_target) * (self.concentration - 2.0) + 1.0

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def _standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    # Box-Muller; 1 - u keeps the log argument in (0, 1]
    half = (n + 1) // 2
    u1 = rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(1.0 - u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])[:n]


def _gamma(rng: np.random.Generator, shape: float, n: int) -> np.ndarray:
    """Marsaglia-Tsang rejection sampler for Gamma(shape, 1), shape > 1."""
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(n, dtype=np.float64)
    pending = np.arange(n)
    while pending.size:
        k = pending.size
        x = _standard_normal(rng, k)
        v = (1.0 + c * x) ** 3
        u = rng.random(k)
        valid = v > 0.0
        squeeze = u < 1.0 - 0.0331 * x**4
        full = np.zeros(k, dtype=bool)
        if valid.any():
            lv = np.log(v[valid])
            full[valid] = np.log(u[valid]) < 0.5 * x[valid] ** 2 + d * (1.0 - v[valid] + lv)
        accept = valid & (squeeze | full)
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    return out


class RateSampler:
    """Owns one random stream; not shareable across concurrent callers."""

    def __init__(self, spec: BetaRateSpec, seed: int = 0):
        self.spec = spec
        self._rng = np.random.default_rng(seed)

    def sample(self) -> float:
        return float(self.sample_many(1)[0])

    def sample_many(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        x = _gamma(self._rng, self.spec.alpha, n)
        y = _gamma(self._rng, self.spec.beta, n)
        return x / (x + y)


def sample_rate(spec: BetaRateSpec, seed: int = 0) -> float:
    """One seeded draw; equal to ``RateSampler(spec, seed).sample()``."""
    return RateSampler(spec, seed).sample()
