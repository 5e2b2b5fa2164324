"""Numerically stable scalar kernels.

Erlang (integer-shape gamma) log-density, log-survival and hazard; truncated
exponential / lognormal inverse-CDF samplers; conditionals of a bivariate
lognormal. Everything here is log-space arithmetic so shapes in the tens of
thousands stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from erlmix.errors import DomainError

# Relative nudge applied before taking ceilings so that values sitting on a
# bin edge k*theta resolve into the right-closed bin ((k-1)theta, k*theta].
EDGE_EPS = 1e-12


@dataclass(frozen=True)
class ErlangParams:
    """Gamma kernel with integer shape m >= 1 and scale theta > 0."""

    m: int
    theta: float

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise DomainError(f"shape m must be a positive integer, got {self.m!r}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise DomainError(f"scale theta must be positive, got {self.theta!r}")


@dataclass(frozen=True)
class LogNormalParams:
    """Lognormal with log-scale location mu and variance sigma2 > 0."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2!r}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class BivariateNormalParams:
    """Mean vector and 2x2 SPD covariance on the log scale."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise DomainError("mean must be a 2-vector and cov a 2x2 matrix")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, abs(cov).max())):
            raise DomainError("covariance must be symmetric")
        if cov[0, 0] <= 0 or cov[1, 1] <= 0 or np.linalg.det(cov) <= 0:
            raise DomainError("covariance must be positive definite")


def _check_t(t: float) -> float:
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise DomainError(f"time must be positive and finite, got {t!r}")
    return t


def erlang_log_pdf(t: float, p: ErlangParams) -> float:
    """log Ga(t | m, theta) = (m-1) log t - t/theta - m log theta - log GAMMA(m)."""
    t = _check_t(t)
    m, theta = p.m, p.theta
    return (m - 1) * math.log(t) - t / theta - m * math.log(theta) - math.lgamma(m)


def erlang_log_sf(t: float, p: ErlangParams) -> float:
    """log P(T > t) for the Erlang kernel.

    For integer shape m this is the Poisson partial sum
    sum_{k=0}^{m-1} e^{-lam} lam^k / k! with lam = t/theta, accumulated in
    log space so neither e^{-lam} nor lam^k can under/overflow.
    """
    t = _check_t(t)
    m, theta = p.m, p.theta
    lam = t / theta
    loglam = math.log(lam)
    # log of term_k = -lam + k log lam - log k!, accumulated by logaddexp.
    acc = -lam
    logterm = -lam
    for k in range(1, m):
        logterm += loglam - math.log(k)
        if logterm > acc:
            acc = logterm + math.log1p(math.exp(acc - logterm))
        else:
            acc = acc + math.log1p(math.exp(logterm - acc))
    return min(acc, 0.0)


def erlang_hazard(t: float, p: ErlangParams) -> float:
    """Hazard of the Erlang kernel; constant 1/theta for m=1, increasing for m>=2.

    t=0 is accepted and mapped to the continuous extension of the hazard at
    0+ (1/theta for m=1, 0 for m>=2).
    """
    if t == 0:
        return 1.0 / p.theta if p.m == 1 else 0.0
    return math.exp(erlang_log_pdf(t, p) - erlang_log_sf(t, p))


def component_of(phi: float, M: int, theta: float) -> int:
    """Bin index of phi on the grid ((m-1)theta, m*theta], capped at M.

    Edge hits phi = k*theta land in bin k; the relative nudge keeps
    floating-point representations of exact edges on the closed side.
    """
    if not phi > 0:
        raise DomainError(f"phi must be positive, got {phi!r}")
    r = phi / theta
    b = int(math.ceil(r * (1.0 - EDGE_EPS)))
    if b < 1:
        b = 1
    return min(b, M)


def _check_interval(lo: float, hi: float) -> None:
    if not (0 <= lo < hi):
        raise DomainError(f"need 0 <= lo < hi, got lo={lo!r}, hi={hi!r}")


def _clamp_inside(x: float, lo: float, hi: float) -> float:
    """Force x into (lo, hi], respecting the bin-edge tie rule."""
    inside = math.nextafter(lo, math.inf)
    if lo > 0:
        inside = max(inside, lo * (1.0 + 2.0 * EDGE_EPS))
    return min(max(x, inside), hi)


def truncated_exp_sample(zeta: float, lo: float, hi: float, u: float) -> float:
    """Inverse-CDF draw from Exp(mean zeta) restricted to (lo, hi].

    hi may be inf, in which case the memoryless property gives a shifted
    exponential. u is a Uniform(0,1) variate supplied by the caller.
    """
    if not zeta > 0:
        raise DomainError(f"zeta must be positive, got {zeta!r}")
    _check_interval(lo, hi)
    if math.isinf(hi):
        x = lo - zeta * math.log1p(-u)
    else:
        # 1 - u*(1 - e^{-(hi-lo)/zeta}), kept accurate near both endpoints
        x = lo - zeta * math.log1p(u * math.expm1(-(hi - lo) / zeta))
    return _clamp_inside(x, lo, hi)


def truncated_lognormal_sample(p: LogNormalParams, lo: float, hi: float, u: float) -> float:
    """Inverse-CDF draw from LN(mu, sigma2) restricted to (lo, hi].

    Works in survival space, S(x) = Phi(-(log x - mu)/sigma), which keeps
    relative precision in the right tail where the upper mixture bins live.
    """
    _check_interval(lo, hi)
    mu, sigma = p.mu, p.sigma
    s_lo = 1.0 if lo == 0 else ndtr(-(math.log(lo) - mu) / sigma)
    s_hi = 0.0 if math.isinf(hi) else ndtr(-(math.log(hi) - mu) / sigma)
    s_x = s_lo - u * (s_lo - s_hi)
    if s_x <= 0.0:
        return hi
    z = -ndtri(s_x)
    return _clamp_inside(math.exp(mu + sigma * z), lo, hi)


def bln_conditional(params: BivariateNormalParams, given_index: int, given_value: float) -> LogNormalParams:
    """Conditional law of one coordinate of a bivariate lognormal.

    Conditioning is on the log of the given coordinate: for given_index=2,
    the first coordinate is LN(mu1 + S12/S22 (log v - mu2), S11 - S12^2/S22),
    and symmetrically for given_index=1.
    """
    if given_index not in (1, 2):
        raise DomainError(f"given_index must be 1 or 2, got {given_index!r}")
    if not given_value > 0:
        raise DomainError(f"given_value must be positive, got {given_value!r}")
    g = given_index - 1
    o = 1 - g
    mean, cov = params.mean, params.cov
    slope = cov[o, g] / cov[g, g]
    mu_c = mean[o] + slope * (math.log(given_value) - mean[g])
    var_c = cov[o, o] - cov[o, g] * cov[g, o] / cov[g, g]
    return LogNormalParams(mu=float(mu_c), sigma2=float(var_c))


def lognormal_log_pdf(t: float, p: LogNormalParams) -> float:
    t = _check_t(t)
    z = (math.log(t) - p.mu) / p.sigma
    return -math.log(t) - math.log(p.sigma) - 0.5 * math.log(2.0 * math.pi) - 0.5 * z * z


def lognormal_cdf(t: float, p: LogNormalParams) -> float:
    if t <= 0:
        return 0.0
    return float(ndtr((math.log(t) - p.mu) / p.sigma))


def lognormal_sf(t: float, p: LogNormalParams) -> float:
    if t <= 0:
        return 1.0
    return float(ndtr(-(math.log(t) - p.mu) / p.sigma))
