"""Differentially private publication of holder information.

The published vector is clipped to L2 norm ``C`` (so its sensitivity is
``C``), perturbed with N(0, (sigma*C)^2 I) and, optionally, shrunk with the
James-Stein estimator.  ``epsilon = inf`` is a first-class sentinel meaning
sigma = 0 (no noise); ``clip = inf`` disables clipping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

INF = math.inf
MECHANISMS = ("gaussian", "james_stein")


def sigma_from_eps(epsilon: float, delta: float) -> float:
    """Noise multiplier sqrt(2 ln(1.25/delta)) / epsilon; 0 when epsilon is inf."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if math.isinf(epsilon) and epsilon > 0:
        return 0.0
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class DpParams:
    epsilon: float = INF
    delta: float = 1e-4
    clip: float = 1.0
    mechanism: str = "gaussian"

    def __post_init__(self):
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        sigma_from_eps(self.epsilon, self.delta)

    @property
    def sigma(self) -> float:
        return sigma_from_eps(self.epsilon, self.delta)

    @property
    def noise_std(self) -> float:
        s = self.sigma
        return 0.0 if s == 0.0 else s * self.clip


def clip(x: np.ndarray, c: float) -> np.ndarray:
    """Scale x by min(1, c/||x||) along the last axis."""
    if not c > 0:
        raise ValueError("clip value must be positive")
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(c):
        return x.copy()
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    factor = np.minimum(1.0, c / np.where(norms > 0, norms, 1.0))
    return x * factor


def gaussian_publish(x: np.ndarray, params: DpParams, rng: np.random.Generator) -> np.ndarray:
    """Clip each vector (last axis) and add i.i.d. N(0, (sigma C)^2) noise."""
    bar = clip(x, params.clip)
    std = params.noise_std
    if std == 0.0:
        return bar
    return bar + std * rng.standard_normal(bar.shape)


def james_stein_shrink(noisy: np.ndarray, noise_std: float) -> np.ndarray:
    """(1 - (d-2) s^2 / ||x~||^2) x~ along the last axis; zero for ||x~|| < 1e-12."""
    noisy = np.asarray(noisy, dtype=np.float64)
    d = noisy.shape[-1]
    if d < 3:
        raise ValueError(f"James-Stein shrinkage needs dimension >= 3, got {d}")
    sq = np.sum(noisy * noisy, axis=-1, keepdims=True)
    tiny = sq < 1e-24
    factor = 1.0 - (d - 2) * noise_std**2 / np.where(tiny, 1.0, sq)
    return np.where(tiny, 0.0, factor * noisy)


def james_stein_publish(x: np.ndarray, params: DpParams, rng: np.random.Generator) -> np.ndarray:
    d = np.shape(x)[-1]
    if d < 3:
        raise ValueError(f"James-Stein shrinkage needs dimension >= 3, got {d}")
    return james_stein_shrink(gaussian_publish(x, params, rng), params.noise_std)


def publish(x: np.ndarray, params: DpParams, rng: np.random.Generator) -> np.ndarray:
    if params.mechanism == "james_stein":
        return james_stein_publish(x, params, rng)
    return gaussian_publish(x, params, rng)


def mse_gaussian(d: int, sigma: float, c: float) -> float:
    return d * sigma**2 * c**2


def mse_james_stein(d: int, sigma: float, c: float, w: float) -> float:
    """Closed-form James-Stein MSE under a N(0, w^2 I) prior.

    ``d s^2 (1 - ((d-2)^2/d^2) s^2/(w^2 + s^2))`` with ``s = sigma*C``; the
    leading factor is the Gaussian mechanism's ``d sigma^2 C^2``.
    """
    if d < 3:
        raise ValueError("James-Stein MSE is defined for d >= 3")
    s2 = (sigma * c) ** 2
    if s2 == 0.0:
        return 0.0
    return d * s2 * (1.0 - ((d - 2) ** 2 / d**2) * s2 / (w**2 + s2))


def bayes_risk_james_stein(d: int, sigma: float, c: float, w: float) -> float:
    """Exact prior-averaged risk ``d s^2 - (d-2) s^4 / (w^2 + s^2)``.

    Uses ``E[1/||x~||^2] = 1/((d-2)(w^2+s^2))`` for x~ ~ N(0, (w^2+s^2) I).
    """
    if d < 3:
        raise ValueError("James-Stein MSE is defined for d >= 3")
    s2 = (sigma * c) ** 2
    if s2 == 0.0:
        return 0.0
    return d * s2 - (d - 2) * s2 * s2 / (w**2 + s2)


@dataclass(frozen=True)
class PrivacyAccountant:
    """Composed privacy loss c2 * q * sqrt(T) * epsilon after T iterations."""

    per_step_epsilon: float
    q: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    steps: int = 0

    @property
    def total(self) -> float:
        if self.steps == 0:
            return 0.0
        return self.c2 * self.q * math.sqrt(self.steps) * self.per_step_epsilon

    @property
    def guard_ok(self) -> bool:
        """Whether per-step epsilon < c1 * q * sqrt(T), the regime the bound assumes."""
        if not math.isfinite(self.per_step_epsilon) or self.steps == 0:
            return True
        return self.per_step_epsilon < self.c1 * self.q * math.sqrt(self.steps)

    def compose(self, steps: int = 1, warn: bool = True) -> "PrivacyAccountant":
        if steps < 0:
            raise ValueError("steps must be non-negative")
        new = replace(self, steps=self.steps + steps)
        if warn and not new.guard_ok:
            bound = self.c1 * self.q * math.sqrt(new.steps)
            warnings.warn(
                f"per-step epsilon {self.per_step_epsilon} is not below c1*q*sqrt(T) = {bound:.4g}; "
                "the composition bound may not apply",
                RuntimeWarning, stacklevel=2)
        return new


def compose(accountant: PrivacyAccountant, steps: int = 1, warn: bool = True) -> PrivacyAccountant:
    return accountant.compose(steps, warn)
