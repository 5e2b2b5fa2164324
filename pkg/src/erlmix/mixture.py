"""Erlang mixture data model.

Weight discretization of a CDF, the mixture density / survival / hazard
(the latter with time-dependent weights), and the censored-data likelihoods
in both marginal and latent-variable form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from erlmix import _backend
from erlmix.errors import DomainError
from erlmix.special import EDGE_EPS, component_of

GROUP_C, GROUP_T = 0, 1
GROUP_NAMES = {GROUP_C: "C", GROUP_T: "T"}

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed times y, event indicators nu (1 = observed, 0 = censored),
    and optional group codes x (0 = control, 1 = treatment)."""

    y: np.ndarray
    nu: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        nu = np.asarray(self.nu, dtype=np.int8)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "nu", nu)
        if y.ndim != 1 or nu.shape != y.shape:
            raise DomainError("y and nu must be 1-d arrays of equal length")
        if y.size and not np.all(y > 0):
            raise DomainError("all observed times must be positive")
        if not np.all((nu == 0) | (nu == 1)):
            raise DomainError("censoring indicators must be 0 or 1")
        if self.x is not None:
            x = np.asarray(self.x, dtype=np.int8)
            object.__setattr__(self, "x", x)
            if x.shape != y.shape:
                raise DomainError("group labels must match the number of records")
            if not np.all((x == GROUP_C) | (x == GROUP_T)):
                raise DomainError("group codes must be 0 (C) or 1 (T)")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def group_mask(self, code: int) -> np.ndarray:
        if self.x is None:
            raise DomainError("dataset carries no group labels")
        return self.x == code


@dataclass(frozen=True)
class WeightVector:
    """Mixture weights (omega_1..omega_M) over Erlang shapes sharing scale theta."""

    M: int
    theta: float
    omega: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", omega)
        if self.M < 1:
            raise DomainError("M must be >= 1")
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if omega.shape != (self.M,):
            raise DomainError(f"omega must have length M={self.M}")
        if np.any(omega < 0) or np.any(omega > 1):
            raise DomainError("weights must lie in [0, 1]")
        if abs(math.fsum(omega) - 1.0) > _WEIGHT_SUM_TOL:
            raise DomainError("weights must sum to 1")

    def log_omega(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.omega > 0, np.log(np.maximum(self.omega, 1e-300)), -np.inf)


@dataclass(frozen=True)
class ExpCdf:
    """Exponential distribution function with mean zeta."""

    zeta: float

    def __post_init__(self):
        if not self.zeta > 0:
            raise DomainError("zeta must be positive")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return -np.expm1(-t / self.zeta)


@dataclass(frozen=True)
class EmpiricalMixtureCdf:
    """base_weight * Exp(zeta) plus equal point masses at the atoms.

    This is the form of the conditional DP centering distribution: the
    exponential part carries weight alpha/(alpha+n) and each of the n atoms
    1/(alpha+n). Atoms sitting exactly on a bin edge k*theta belong to bin k
    because the CDF is right-continuous.
    """

    base_weight: float
    zeta: float
    atoms: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        atoms = np.sort(np.asarray(self.atoms, dtype=float))
        object.__setattr__(self, "atoms", atoms)
        if not 0.0 <= self.base_weight <= 1.0:
            raise DomainError("base_weight must lie in [0, 1]")
        if not self.zeta > 0:
            raise DomainError("zeta must be positive")
        if atoms.size:
            if not np.all(atoms > 0):
                raise DomainError("atoms must be positive")
        elif self.base_weight != 1.0:
            raise DomainError("base_weight must be 1 when there are no atoms")

    @property
    def atom_weight(self) -> float:
        return (1.0 - self.base_weight) / self.atoms.size if self.atoms.size else 0.0

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        base = self.base_weight * -np.expm1(-t / self.zeta)
        if not self.atoms.size:
            return base
        counts = np.searchsorted(self.atoms, t, side="right")
        return base + self.atom_weight * counts


def weights_from_cdf(g, M: int, theta: float) -> WeightVector:
    """omega_m = G(m theta) - G((m-1) theta), last bin absorbing the tail."""
    if M < 1:
        raise DomainError("M must be >= 1")
    if not theta > 0:
        raise DomainError("theta must be positive")
    edges = np.arange(1, M, dtype=float) * theta
    vals = np.atleast_1d(np.asarray(g.cdf(edges), dtype=float)) if M > 1 else np.empty(0)
    cum = np.concatenate(([0.0], vals, [1.0]))
    omega = np.maximum(np.diff(cum), 0.0)
    return WeightVector(M=M, theta=theta, omega=omega)


def _tables(t, w: WeightVector):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise DomainError("evaluation times must be positive")
    lp = _backend.logpdf_table(t, w.M, w.theta)
    ls = _backend.logsf_table(t, w.M, w.theta)
    return t, lp, ls


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    mx = a.max(axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def mixture_log_density(t, w: WeightVector):
    """log sum_m omega_m Ga(t | m, theta), via log-sum-exp over omega_m > 0."""
    t_arr, lp, _ = _tables(t, w)
    out = _logsumexp_rows(w.log_omega()[None, :] + lp)
    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


def mixture_log_survival(t, w: WeightVector):
    """log sum_m omega_m S_Ga(t | m, theta); nonpositive, non-increasing in t."""
    t_arr, _, ls = _tables(t, w)
    out = np.minimum(_logsumexp_rows(w.log_omega()[None, :] + ls), 0.0)
    return float(out[0]) if np.isscalar(t) or np.ndim(t) == 0 else out


def mixture_hazard(t: float, w: WeightVector) -> tuple[float, np.ndarray]:
    """Hazard at t plus the time-dependent weights.

    Returns (h, tdw) where tdw_m = omega_m S_Ga(t|m)/sum_m' omega_m' S_Ga(t|m')
    and h = sum_m tdw_m h_Ga(t|m, theta).
    """
    _, lp, ls = _tables(t, w)
    lp, ls = lp[0], ls[0]
    lo = w.log_omega()
    num = lo + ls
    denom = _logsumexp_rows(num[None, :])[0]
    tdw = np.exp(num - denom)
    hazard = float(np.sum(tdw * np.exp(lp - ls)))
    return hazard, tdw


def curves(w: WeightVector, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Density, survival and hazard of the mixture on a positive grid."""
    grid, lp, ls = _tables(grid, w)
    lo = w.log_omega()[None, :]
    logf = _logsumexp_rows(lo + lp)
    logS = np.minimum(_logsumexp_rows(lo + ls), 0.0)
    f = np.exp(logf)
    S = np.exp(logS)
    with np.errstate(over="ignore", invalid="ignore"):
        h = np.exp(logf - logS)
    return f, S, h


def censored_log_likelihood(data: SurvivalDataset, w: WeightVector) -> float:
    """sum_i nu_i log f(y_i) + (1 - nu_i) log S(y_i); empty dataset gives 0."""
    if data.n == 0:
        return 0.0
    _, lp, ls = _tables(data.y, w)
    lo = w.log_omega()[None, :]
    logf = _logsumexp_rows(lo + lp)
    logS = _logsumexp_rows(lo + ls)
    return float(np.sum(np.where(data.nu == 1, logf, logS)))


def latent_components(phi: np.ndarray, M: int, theta: float) -> np.ndarray:
    """Clamped bin index of each latent value (vectorized component_of)."""
    phi = np.asarray(phi, dtype=float)
    if phi.size and not np.all(phi > 0):
        raise DomainError("latent values must be positive")
    b = np.ceil((phi / theta) * (1.0 - EDGE_EPS)).astype(np.int64)
    return np.clip(b, 1, M)


def augmented_log_likelihood(data: SurvivalDataset, phi: np.ndarray, M: int, theta: float) -> float:
    """Likelihood of the latent-variable model: each observation contributes
    through the single Erlang component whose bin contains its phi_i."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != data.y.shape:
        raise DomainError("phi must have one entry per observation")
    comps = latent_components(phi, M, theta)
    table = _backend.log_kernel_table(data.y, data.nu, M, theta)
    return float(table[np.arange(data.n), comps - 1].sum())
