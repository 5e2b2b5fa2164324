"""Posterior functionals: weight draws from the conditional DP posterior,
grid summaries of density/survival/hazard with pointwise credible bands,
effective-component counts, group contrasts, and prior-realization studies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from erlmix.errors import DomainError, NumericError
from erlmix.ddp import DdpChainState, GroupWeightPair, lognormal_bin_log_masses_matrix
from erlmix.dp import DpChainState, exp_bin_log_masses
from erlmix.mixture import WeightVector, curves, latent_components

# Hazard values at grid points where a draw's survival has collapsed below
# this threshold are reported as missing rather than propagated as overflow.
HAZARD_SURVIVAL_FLOOR = 1e-12


@dataclass(frozen=True)
class GStarSpec:
    """Conditional posterior DP parameters given the latent atoms: total mass
    alpha + n and centering alpha/(alpha+n) Exp(zeta) + (alpha+n)^{-1} sum of
    point masses at the atoms."""

    alpha: float
    zeta: float
    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not self.zeta > 0:
            raise DomainError("zeta must be positive")
        if atoms.size and not np.all(atoms > 0):
            raise DomainError("atoms must be positive")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def alpha_star(self) -> float:
        return self.alpha + self.n

    @property
    def base_weight(self) -> float:
        return self.alpha / (self.alpha + self.n)


def dirichlet_parameters(gstar: GStarSpec, M: int, theta: float) -> np.ndarray:
    """alpha* G0*(B_m) = alpha * Exp(zeta) mass of B_m + number of atoms in B_m."""
    mass = np.exp(exp_bin_log_masses(M, theta, gstar.zeta))
    a = gstar.alpha * mass
    if gstar.n:
        bins = latent_components(gstar.atoms, M, theta)
        a = a + np.bincount(bins - 1, minlength=M)
    return a


def _dirichlet_from_gammas(a: np.ndarray, rng) -> np.ndarray:
    """Normalized independent gamma variates; zero parameters give exact zeros."""
    draws = np.where(a > 0, rng.gamma(np.maximum(a, 1e-300)), 0.0)
    total = draws.sum()
    if not total > 0:
        raise NumericError("all Dirichlet gamma draws underflowed to zero")
    return draws / total


def sample_weights_posterior(gstar: GStarSpec, M: int, theta: float, rng) -> WeightVector:
    """Draw omega from its conditional Dirichlet posterior."""
    a = dirichlet_parameters(gstar, M, theta)
    return WeightVector(M=M, theta=theta, omega=_dirichlet_from_gammas(a, rng))


def _bvln_cell_masses(mu: np.ndarray, Sigma: np.ndarray, M_C: int, theta_C: float,
                      M_T: int, theta_T: float, n_nodes: int = 24) -> np.ndarray:
    """(M_C, M_T) masses of B_Ck x B_Tl under LN2(mu, Sigma).

    Diagonal Sigma factorizes exactly; otherwise the T coordinate is
    integrated by Gauss-Legendre on its standard-normal scale with the
    conditional C-coordinate CDF evaluated at each node.
    """
    s11, s12, s22 = Sigma[0, 0], Sigma[0, 1], Sigma[1, 1]
    if s12 == 0.0:
        mC = np.exp(lognormal_bin_log_masses_matrix(M_C, theta_C, np.array([mu[0]]), math.sqrt(s11))[0])
        mT = np.exp(lognormal_bin_log_masses_matrix(M_T, theta_T, np.array([mu[1]]), math.sqrt(s22))[0])
        return np.outer(mC, mT)
    sd_T = math.sqrt(s22)
    z_edges = np.concatenate((
        [-8.5], (np.log(np.arange(1, M_T) * theta_T) - mu[1]) / sd_T, [8.5]
    ))
    z_edges = np.clip(z_edges, -8.5, 8.5)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    half = 0.5 * (z_edges[1:] - z_edges[:-1])
    mid = 0.5 * (z_edges[1:] + z_edges[:-1])
    z = mid[:, None] + half[:, None] * nodes[None, :]          # (M_T, nodes)
    wq = half[:, None] * weights[None, :] * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    mu_c = mu[0] + (s12 / s22) * (sd_T * z)                     # log phi_T - mu2 = sd_T z
    sd_c = math.sqrt(s11 - s12 * s12 / s22)
    edges_C = np.log(np.arange(1, M_C) * theta_C)
    zc = (edges_C[None, None, :] - mu_c[:, :, None]) / sd_c     # (M_T, nodes, M_C-1)
    cdf = ndtr(zc)
    cdf_full = np.concatenate((np.zeros(cdf.shape[:2] + (1,)), cdf, np.ones(cdf.shape[:2] + (1,))), axis=2)
    cond = np.diff(cdf_full, axis=2)                            # (M_T, nodes, M_C)
    cells = np.einsum("ln,lnk->kl", wq, cond)
    return np.maximum(cells, 0.0)


def sample_group_weights_posterior(state: DdpChainState, Sigma: np.ndarray, rng) -> GroupWeightPair:
    """One joint draw of (omega_C, omega_T) from the conditional DP posterior.

    The joint random CDF is Dirichlet over the product partition
    {B_Ck x B_Tl}; aggregating a single cell-level draw to each margin keeps
    the common-weights coupling between the groups, which the contrast
    summaries rely on.
    """
    cells = state.alpha * _bvln_cell_masses(
        state.mu, np.asarray(Sigma, dtype=float),
        state.M_C, state.theta_C, state.M_T, state.theta_T,
    )
    binsC = latent_components(state.phi[:, 0], state.M_C, state.theta_C)
    binsT = latent_components(state.phi[:, 1], state.M_T, state.theta_T)
    np.add.at(cells, (binsC - 1, binsT - 1), 1.0)
    flat = _dirichlet_from_gammas(cells.reshape(-1), rng).reshape(cells.shape)
    return GroupWeightPair(
        C=WeightVector(M=state.M_C, theta=state.theta_C, omega=flat.sum(axis=1)),
        T=WeightVector(M=state.M_T, theta=state.theta_T, omega=flat.sum(axis=0)),
    )


@dataclass(frozen=True)
class FunctionalSummary:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    kind: str
    level: float = 0.95


@dataclass(frozen=True)
class ContrastSummary:
    """Pointwise treatment-minus-control differences: full posterior draws at
    each requested time plus their empirical central interval."""

    time_points: np.ndarray
    draws: np.ndarray  # (n_draws, n_times)
    interval: np.ndarray  # (n_times, 2), empirical 2.5/97.5 percentiles
    kind: str
    level: float = 0.95


def curve_for_kind(w: WeightVector, grid: np.ndarray, kind: str) -> np.ndarray:
    f, S, h = curves(w, grid)
    if kind == "density":
        return f
    if kind == "survival":
        return S
    if kind == "hazard":
        h = h.copy()
        h[S < HAZARD_SURVIVAL_FLOOR] = np.nan
        return h
    raise DomainError(f"unknown functional kind {kind!r}")


def summarize_curves(grid: np.ndarray, stack: np.ndarray, kind: str, level: float = 0.95) -> FunctionalSummary:
    """Pointwise mean and central credible band over a (n_draws, n_points) stack."""
    if stack.ndim != 2 or stack.shape[0] == 0:
        raise DomainError("need at least one curve draw")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)  # all-NaN columns
        mean = np.nanmean(stack, axis=0)
        if level == 0.0:
            lower = mean.copy()
            upper = mean.copy()
        else:
            lo_q = (1.0 - level) / 2.0
            lower = np.nanquantile(stack, lo_q, axis=0)
            upper = np.nanquantile(stack, 1.0 - lo_q, axis=0)
    return FunctionalSummary(grid=grid, mean=mean, lower=lower, upper=upper, kind=kind, level=level)


def weight_draws_dp(states: list[DpChainState], rng) -> list[WeightVector]:
    """One conditional-posterior omega draw per retained one-group state."""
    if not states:
        raise DomainError("empty chain")
    return [
        sample_weights_posterior(GStarSpec(s.alpha, s.zeta, s.phi), s.M, s.theta, rng)
        for s in states
    ]


def weight_draws_ddp(states: list[DdpChainState], Sigma: np.ndarray, rng) -> list[GroupWeightPair]:
    """One joint (omega_C, omega_T) draw per retained two-group state."""
    if not states:
        raise DomainError("empty chain")
    return [sample_group_weights_posterior(s, Sigma, rng) for s in states]


def summarize_functional(chain_draws, kind: str, grid: np.ndarray, level: float = 0.95,
                         rng=None, weights: list[WeightVector] | None = None) -> FunctionalSummary:
    """Spec-level summary for a one-group chain: draw omega per retained state
    (unless precomputed weights are supplied), evaluate the functional on the
    grid, and report the pointwise mean and credible band."""
    if weights is None:
        weights = weight_draws_dp(list(chain_draws), rng)
    stack = np.vstack([curve_for_kind(w, grid, kind) for w in weights])
    return summarize_curves(grid, stack, kind, level)


def effective_components(w: WeightVector, threshold: float = 0.01) -> int:
    """Number of mixture weights exceeding the threshold."""
    return int(np.count_nonzero(w.omega > threshold))


def contrast_at_times(weight_pairs: list[GroupWeightPair], times, level: float = 0.95
                      ) -> tuple[ContrastSummary, ContrastSummary]:
    """Per-draw S_T - S_C and h_T - h_C at the requested times, with empirical
    central intervals. Hazard differences where either group's survival has
    collapsed are masked."""
    times = np.asarray(times, dtype=float)
    if not weight_pairs:
        raise DomainError("empty chain")
    s_draws = np.empty((len(weight_pairs), times.size))
    h_draws = np.empty_like(s_draws)
    for r, pair in enumerate(weight_pairs):
        fC, SC, hC = curves(pair.C, times)
        fT, ST, hT = curves(pair.T, times)
        s_draws[r] = ST - SC
        hd = hT - hC
        hd[(SC < HAZARD_SURVIVAL_FLOOR) | (ST < HAZARD_SURVIVAL_FLOOR)] = np.nan
        h_draws[r] = hd
    lo_q = (1.0 - level) / 2.0

    def _interval(d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            return np.column_stack([
                np.nanquantile(d, lo_q, axis=0),
                np.nanquantile(d, 1.0 - lo_q, axis=0),
            ])

    return (
        ContrastSummary(times, s_draws, _interval(s_draws), kind="survival", level=level),
        ContrastSummary(times, h_draws, _interval(h_draws), kind="hazard", level=level),
    )


def prior_realizations(alpha: float, zeta: float, M: int, theta: float, count: int, rng,
                       grid: np.ndarray | None = None) -> list[tuple[WeightVector, np.ndarray]]:
    """Draw omega ~ Dir(alpha G0(B_1)..alpha G0(B_M)) with G0 = Exp(zeta) and
    evaluate each realized mixture density on the grid (default: up to the
    support edge M*theta)."""
    if grid is None:
        grid = np.linspace(0.0, M * theta, 513)[1:]
    gstar = GStarSpec(alpha=alpha, zeta=zeta, atoms=np.empty(0))
    out = []
    for _ in range(count):
        w = sample_weights_posterior(gstar, M, theta, rng)
        f, _, _ = curves(w, grid)
        out.append((w, f))
    return out


def default_grid(y: np.ndarray, points: int = 512, quantile: float = 0.995, extend: float = 1.1):
    """Evaluation grid from 0 (exclusive) to the extended upper data quantile."""
    hi = float(np.quantile(np.asarray(y, dtype=float), quantile)) * extend
    return np.linspace(0.0, hi, points + 1)[1:]
