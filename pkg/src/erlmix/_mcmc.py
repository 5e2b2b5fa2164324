"""Shared MCMC machinery: schedules, categorical draws from log weights,
diminishing adaptation, the concentration-parameter augmentation step, and
a running mean/covariance accumulator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from erlmix.errors import ConfigError, NumericError

ACCEPT_TARGET = 0.44


@dataclass(frozen=True)
class Schedule:
    """Total sweeps, burn-in fraction, and thinning for retained draws."""

    iterations: int
    burn_in_fraction: float = 0.25
    thin: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")

    @property
    def burn_in(self) -> int:
        return int(self.iterations * self.burn_in_fraction)

    def keep(self, iteration: int) -> bool:
        return iteration > self.burn_in and (iteration - self.burn_in) % self.thin == 0

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


def m_range(M1: float, M2: float, theta: float) -> tuple[int, int]:
    """Support of M given theta: ceil(M1/theta) .. ceil(M2/theta)."""
    return int(math.ceil(M1 / theta)), int(math.ceil(M2 / theta))


def log_m_prior(M: int, M1: float, M2: float, theta: float) -> float:
    """log p(M | theta) under the discrete uniform; -inf outside the range."""
    lo, hi = m_range(M1, M2, theta)
    if not lo <= M <= hi:
        return -math.inf
    return -math.log(hi - lo + 1)


def gamma_log_pdf(x: float, shape: float, scale: float) -> float:
    if x <= 0:
        return -math.inf
    return (shape - 1.0) * math.log(x) - x / scale - shape * math.log(scale) - math.lgamma(shape)


def draw_inv_gamma(rng, shape: float, scale: float) -> float:
    """inv-Ga(shape, scale) with density proportional to x^{-shape-1} e^{-scale/x}."""
    return scale / rng.gamma(shape, 1.0)


def categorical_from_log(logw: np.ndarray, u: float) -> int:
    """Index drawn from normalized exp(logw) using one uniform."""
    mx = logw.max()
    if mx == -math.inf:
        raise NumericError("all categorical weights underflowed to zero")
    cum = np.cumsum(np.exp(logw - mx))
    return int(np.searchsorted(cum, u * cum[-1], side="right").clip(max=len(cum) - 1))


def adapt_log_step(log_step: float, accepted: bool, iteration: int) -> float:
    """Diminishing Robbins-Monro adjustment toward the target acceptance rate."""
    delta = min(0.01, iteration ** -0.5)
    return log_step + delta * ((1.0 if accepted else 0.0) - ACCEPT_TARGET)


def escobar_west_mixture(eta: float, n: int, n_star: int, a_alpha: float, b_alpha: float
                         ) -> tuple[float, float, float, float]:
    """Given the auxiliary eta, the conditional for alpha is a two-component
    gamma mixture; returns (first-component probability, shape1, shape2, scale)
    where the weights are proportional to (a_alpha + n_star - 1) and
    n (1/b_alpha - log eta), and both components share the scale."""
    rate = 1.0 / b_alpha - math.log(eta)
    w1 = a_alpha + n_star - 1.0
    w2 = n * rate
    return w1 / (w1 + w2), a_alpha + n_star, a_alpha + n_star - 1.0, 1.0 / rate


def escobar_west_alpha(rng, alpha: float, n: int, n_star: int, a_alpha: float, b_alpha: float) -> float:
    """Auxiliary-variable update of the DP total mass parameter:
    eta ~ Beta(alpha+1, n), then alpha from the implied gamma mixture."""
    eta = rng.beta(alpha + 1.0, n)
    p1, shape1, shape2, scale = escobar_west_mixture(eta, n, n_star, a_alpha, b_alpha)
    shape = shape1 if rng.random() < p1 else shape2
    return rng.gamma(shape, scale)


class RunningMeanCov:
    """Welford accumulator for the empirical mean and covariance of a vector."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + np.outer(delta, x - self.mean)

    @property
    def cov(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self._m2)
        return self._m2 / (self.count - 1)


def sample_mvnormal(rng, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Draw N(mean, cov) via a PSD square root (eigendecomposition, so a
    singular covariance from a constant adaptation history is tolerated)."""
    vals, vecs = np.linalg.eigh(cov)
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    return mean + root @ rng.standard_normal(mean.shape[0])
