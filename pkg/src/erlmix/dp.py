"""Marginal Gibbs sampler for the one-group DP-based Erlang mixture.

State is (theta, M, alpha, zeta, phi). Each sweep updates, in order, the
latent values phi_1..phi_n through their Pólya-urn full conditionals, zeta
(conjugate inverse-gamma on the distinct atoms), alpha (auxiliary-variable
augmentation), M (categorical over its theta-dependent range), theta
(log-scale random walk) and (M, theta) jointly. The two Metropolis moves
carry independently adapted step sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from erlmix import _backend, _mcmc
from erlmix.errors import ConfigError, DomainError
from erlmix.mixture import SurvivalDataset, latent_components
from erlmix.special import EDGE_EPS, truncated_exp_sample

__all__ = [
    "DpHyperparams",
    "DpChainState",
    "ClusterView",
    "PolyaUrnWeights",
    "cluster_view",
    "exp_bin_log_masses",
    "polya_urn_weights",
    "update_M",
    "update_theta_rw",
    "update_joint_M_theta",
    "update_zeta",
    "update_alpha",
    "update_phi_i",
    "run_chain",
    "DpSampler",
]


@dataclass(frozen=True)
class DpHyperparams:
    """Priors: alpha ~ Ga(a_alpha, b_alpha); zeta ~ inv-Ga(a_zeta, b_zeta);
    theta ~ Ga(a_theta, b_theta); M | theta ~ Unif(ceil(M1/theta)..ceil(M2/theta)).
    Gamma parameters are shape/scale."""

    a_alpha: float
    b_alpha: float
    a_zeta: float
    b_zeta: float
    a_theta: float
    b_theta: float
    M1: float
    M2: float

    def __post_init__(self):
        for name in ("a_alpha", "b_alpha", "a_zeta", "b_zeta", "a_theta", "b_theta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.M1 >= 1:
            raise ConfigError("M1 must be >= 1")
        if not self.M2 >= self.M1:
            raise ConfigError("M2 must be >= M1")


@dataclass
class DpChainState:
    theta: float
    M: int
    alpha: float
    zeta: float
    phi: np.ndarray
    rw_step: float = 0.5
    joint_step: float = 0.5
    iteration: int = 0

    def copy(self) -> "DpChainState":
        return replace(self, phi=self.phi.copy())


@dataclass(frozen=True)
class ClusterView:
    """Distinct latent values with their multiplicities."""

    atoms: np.ndarray
    counts: np.ndarray

    @property
    def n_star(self) -> int:
        return self.atoms.shape[0]


def cluster_view(phi: np.ndarray) -> ClusterView:
    atoms, counts = np.unique(np.asarray(phi, dtype=float), return_counts=True)
    return ClusterView(atoms=atoms, counts=counts)


def exp_bin_log_masses(M: int, theta: float, zeta: float) -> np.ndarray:
    """log Exp(zeta) masses of the bins ((m-1)theta, m*theta], tail bin last.

    Uses the exact geometric form e^{-(m-1)theta/zeta} (1 - e^{-theta/zeta}),
    so masses far in the tail stay finite on the log scale.
    """
    m = np.arange(1, M + 1, dtype=float)
    r = theta / zeta
    out = -(m - 1.0) * r + math.log(-math.expm1(-r))
    out[-1] = -(M - 1) * r
    return out


@dataclass(frozen=True)
class PolyaUrnWeights:
    """Urn quantities for one observation: q0 integrates the censoring-adjusted
    kernel against the DP base over all bins; qj evaluates it at each distinct
    leave-one-out atom's bin; Omega are the normalized bin probabilities of
    the fresh-draw density."""

    q0: float
    qj: np.ndarray
    Omega: np.ndarray
    log_q0: float = field(repr=False, default=-math.inf)
    log_qj: np.ndarray = field(repr=False, default=None)


def _kernel_row(y_i: float, nu_i: int, M: int, theta: float) -> np.ndarray:
    return _backend.log_kernel_table(
        np.array([y_i]), np.array([nu_i], dtype=np.int8), M, theta
    )[0]


def polya_urn_weights(
    y_i: float,
    nu_i: int,
    loo_atoms: np.ndarray,
    M: int,
    theta: float,
    zeta: float,
) -> PolyaUrnWeights:
    """Reference computation of (q0, qj, Omega) for one observation."""
    krow = _kernel_row(y_i, nu_i, M, theta)
    log_g = exp_bin_log_masses(M, theta, zeta)
    terms = log_g + krow
    mx = terms.max()
    log_q0 = mx + math.log(np.exp(terms - mx).sum())
    loo_atoms = np.asarray(loo_atoms, dtype=float)
    if loo_atoms.size:
        bins = latent_components(loo_atoms, M, theta)
        log_qj = krow[bins - 1]
    else:
        log_qj = np.empty(0)
    return PolyaUrnWeights(
        q0=math.exp(log_q0),
        qj=np.exp(log_qj),
        Omega=np.exp(terms - log_q0),
        log_q0=log_q0,
        log_qj=log_qj,
    )


class KernelCache:
    """Keeps the censoring-adjusted kernel tables for the last few theta values.

    A table at theta has ceil(M2/theta) columns so it serves the phi sweep,
    the categorical M update, and any candidate M evaluation at that theta.
    """

    def __init__(self, y: np.ndarray, nu: np.ndarray, M2: float):
        self.y = y
        self.nu = nu
        self.M2 = M2
        self._tables: dict[float, np.ndarray] = {}

    def table_for(self, theta: float) -> np.ndarray:
        table = self._tables.get(theta)
        if table is None:
            cols = int(math.ceil(self.M2 / theta))
            table = _backend.log_kernel_table(self.y, self.nu, cols, theta)
            if len(self._tables) >= 3:
                self._tables.pop(next(iter(self._tables)))
            self._tables[theta] = table
        return table


def _unclamped_bins(phi: np.ndarray, theta: float) -> np.ndarray:
    b = np.ceil((phi / theta) * (1.0 - EDGE_EPS)).astype(np.int64)
    return np.maximum(b, 1)


def _augmented_loglik(table: np.ndarray, bins: np.ndarray, M: int) -> float:
    comp = np.minimum(bins, M)
    return float(table[np.arange(bins.shape[0]), comp - 1].sum())


def _candidate_logliks(table: np.ndarray, bins: np.ndarray, j_lo: int, j_hi: int) -> np.ndarray:
    """Augmented log likelihood for every candidate M in j_lo..j_hi.

    Observation i enters candidate j through component min(b_i, j), so only
    observations with b_i > j_lo vary across candidates.
    """
    cand = np.arange(j_lo, j_hi + 1)
    rows = np.arange(bins.shape[0])
    inside = bins <= j_lo
    base = float(table[rows[inside], bins[inside] - 1].sum())
    ll = np.full(cand.shape, base)
    for i in rows[~inside]:
        ll += table[i, np.minimum(bins[i], cand) - 1]
    return ll


def update_M(state: DpChainState, data: SurvivalDataset, hp: DpHyperparams, rng,
             cache: KernelCache | None = None) -> int:
    """Draw M from its categorical full conditional given theta and phi."""
    cache = cache or KernelCache(data.y, data.nu, hp.M2)
    table = cache.table_for(state.theta)
    j_lo, j_hi = _mcmc.m_range(hp.M1, hp.M2, state.theta)
    bins = _unclamped_bins(state.phi, state.theta)
    ll = _candidate_logliks(table, bins, j_lo, j_hi)
    state.M = j_lo + _mcmc.categorical_from_log(ll, rng.random())
    return state.M


def update_theta_rw(state: DpChainState, data: SurvivalDataset, hp: DpHyperparams, rng,
                    cache: KernelCache | None = None, adapt: bool = True) -> bool:
    """Log-scale random walk on theta; M kept fixed. Returns acceptance."""
    cache = cache or KernelCache(data.y, data.nu, hp.M2)
    z = rng.standard_normal()
    u = rng.random()
    theta_star = math.exp(math.log(state.theta) + state.rw_step * z)
    log_r = theta_rw_log_ratio(state, hp, theta_star, cache)
    accepted = log_r > 0 or u < math.exp(log_r)
    if accepted:
        state.theta = theta_star
    if adapt:
        state.rw_step = math.exp(
            _mcmc.adapt_log_step(math.log(state.rw_step), accepted, max(state.iteration, 1))
        )
    return accepted


def theta_rw_log_ratio(state: DpChainState, hp: DpHyperparams, theta_star: float,
                       cache: KernelCache) -> float:
    """log acceptance ratio of the theta random walk, including the p(M|theta)
    factor (range indicator and 1/#candidates) and the log-scale Jacobian."""
    lo_s, hi_s = _mcmc.m_range(hp.M1, hp.M2, theta_star)
    if not lo_s <= state.M <= hi_s:
        return -math.inf
    cur = _log_theta_target(state.theta, state.M, state.phi, hp, cache)
    new = _log_theta_target(theta_star, state.M, state.phi, hp, cache)
    return new - cur


def _log_theta_target(theta: float, M: int, phi: np.ndarray, hp: DpHyperparams,
                      cache: KernelCache) -> float:
    """log of theta * Ga(theta) * p(M|theta) * L(M, theta, phi), the target of
    the log-scale walk (the leading theta is the Jacobian)."""
    table = cache.table_for(theta)
    bins = _unclamped_bins(phi, theta)
    return (
        math.log(theta)
        + _mcmc.gamma_log_pdf(theta, hp.a_theta, hp.b_theta)
        + _mcmc.log_m_prior(M, hp.M1, hp.M2, theta)
        + _augmented_loglik(table, bins, M)
    )


def _inv_quadratic_log_weights(center: int, j_lo: int, j_hi: int) -> np.ndarray:
    cand = np.arange(j_lo, j_hi + 1)
    w = 1.0 / ((cand - center) ** 2 + 1.0)
    return np.log(w / w.sum())


def update_joint_M_theta(state: DpChainState, data: SurvivalDataset, hp: DpHyperparams, rng,
                         cache: KernelCache | None = None, adapt: bool = True) -> bool:
    """Joint MH move: theta* from a log-normal walk, M* from an inverse-quadratic
    kernel over the theta*-dependent range. Returns acceptance."""
    cache = cache or KernelCache(data.y, data.nu, hp.M2)
    z = rng.standard_normal()
    u_m = rng.random()
    u = rng.random()
    theta_star = math.exp(math.log(state.theta) + state.joint_step * z)
    lo_s, hi_s = _mcmc.m_range(hp.M1, hp.M2, theta_star)
    logq_fwd = _inv_quadratic_log_weights(state.M, lo_s, hi_s)
    M_star = lo_s + _mcmc.categorical_from_log(logq_fwd, u_m)
    log_r = joint_mtheta_log_ratio(state, hp, theta_star, M_star, cache)
    accepted = log_r > 0 or u < math.exp(log_r)
    if accepted:
        state.theta = theta_star
        state.M = M_star
    if adapt:
        state.joint_step = math.exp(
            _mcmc.adapt_log_step(math.log(state.joint_step), accepted, max(state.iteration, 1))
        )
    return accepted


def joint_mtheta_log_ratio(state: DpChainState, hp: DpHyperparams, theta_star: float,
                           M_star: int, cache: KernelCache) -> float:
    """log acceptance ratio of the joint (M, theta) move, including the
    proposal correction q(M_old | theta_old, M*) / q(M* | theta*, M_old)."""
    lo_s, hi_s = _mcmc.m_range(hp.M1, hp.M2, theta_star)
    if not lo_s <= M_star <= hi_s:
        return -math.inf
    lo_c, hi_c = _mcmc.m_range(hp.M1, hp.M2, state.theta)
    logq_fwd = _inv_quadratic_log_weights(state.M, lo_s, hi_s)[M_star - lo_s]
    logq_rev = _inv_quadratic_log_weights(M_star, lo_c, hi_c)[state.M - lo_c]
    new = _log_theta_target(theta_star, M_star, state.phi, hp, cache)
    cur = _log_theta_target(state.theta, state.M, state.phi, hp, cache)
    return new + logq_rev - cur - logq_fwd


def update_zeta(state: DpChainState, hp: DpHyperparams, rng) -> float:
    """Conjugate inverse-gamma draw; only distinct atoms enter the statistics."""
    cv = cluster_view(state.phi)
    state.zeta = _mcmc.draw_inv_gamma(rng, hp.a_zeta + cv.n_star, hp.b_zeta + cv.atoms.sum())
    return state.zeta


def update_alpha(state: DpChainState, n: int, hp: DpHyperparams, rng) -> float:
    cv = cluster_view(state.phi)
    state.alpha = _mcmc.escobar_west_alpha(rng, state.alpha, n, cv.n_star, hp.a_alpha, hp.b_alpha)
    return state.alpha


def update_phi_i(state: DpChainState, data: SurvivalDataset, i: int, rng) -> float:
    """Pólya-urn update of one latent value (reference implementation;
    the chain driver uses the backend sweep). Consumes three uniforms."""
    u_choice, u_bin, u_tail = rng.random(3)
    loo = np.delete(state.phi, i)
    cv = cluster_view(loo)
    urn = polya_urn_weights(data.y[i], int(data.nu[i]), cv.atoms, state.M, state.theta, state.zeta)
    logw = np.concatenate((np.log(cv.counts) + urn.log_qj,
                           [math.log(state.alpha) + urn.log_q0]))
    j = _mcmc.categorical_from_log(logw, u_choice)
    if j < cv.n_star:
        state.phi[i] = cv.atoms[j]
    else:
        with np.errstate(divide="ignore"):
            m = 1 + _mcmc.categorical_from_log(np.log(urn.Omega), u_bin)
        lo = (m - 1) * state.theta
        hi = m * state.theta if m < state.M else math.inf
        state.phi[i] = truncated_exp_sample(state.zeta, lo, hi, u_tail)
    return float(state.phi[i])


def initial_state(data: SurvivalDataset, hp: DpHyperparams) -> DpChainState:
    """Prior-mean scalars; latent values start at the observations, clipped
    into the support implied by (M0, theta0)."""
    theta0 = hp.a_theta * hp.b_theta
    j_lo, j_hi = _mcmc.m_range(hp.M1, hp.M2, theta0)
    M0 = (j_lo + j_hi) // 2
    zeta0 = float(np.mean(data.y))
    alpha0 = hp.a_alpha * hp.b_alpha
    phi0 = np.minimum(data.y.astype(float), M0 * theta0 * (1.0 + 1e-6))
    return DpChainState(theta=theta0, M=M0, alpha=alpha0, zeta=zeta0, phi=phi0)


class DpSampler:
    """Runs the Metropolis-within-Gibbs chain and tracks acceptance counts."""

    def __init__(self, data: SurvivalDataset, hp: DpHyperparams, rng):
        if data.n == 0:
            raise ConfigError("dataset must be non-empty")
        self.data = data
        self.hp = hp
        self.rng = rng
        self.state = initial_state(data, hp)
        self.cache = KernelCache(data.y, data.nu, hp.M2)
        self.accepts = {"theta_rw": 0, "joint_m_theta": 0}
        self.proposals = {"theta_rw": 0, "joint_m_theta": 0}
        n = data.n
        self._labels = np.empty(n, dtype=np.int64)
        self._atoms = np.empty(n, dtype=float)
        self._abins = np.empty(n, dtype=np.int64)
        self._counts = np.empty(n, dtype=np.int64)
        self._k = 0
        self._rebuild_clusters()

    def _rebuild_clusters(self) -> None:
        atoms, inverse, counts = np.unique(self.state.phi, return_inverse=True, return_counts=True)
        k = atoms.shape[0]
        self._atoms[:k] = atoms
        self._counts[:k] = counts
        self._labels[:] = inverse
        self._k = k

    def sweep(self, adapt: bool = True) -> None:
        st = self.state
        st.iteration += 1
        table = self.cache.table_for(st.theta)
        log_g = exp_bin_log_masses(st.M, st.theta, st.zeta)
        terms = log_g[None, :] + table[:, : st.M]
        mx = terms.max(axis=1)
        log_q0 = mx + np.log(np.exp(terms - mx[:, None]).sum(axis=1))
        self._abins[: self._k] = latent_components(self._atoms[: self._k], st.M, st.theta)
        uniforms = self.rng.random(3 * self.data.n)
        self._k = _backend.dp_phi_sweep(
            table, log_g, log_q0, st.phi, self._labels, self._atoms, self._abins,
            self._counts, self._k, st.alpha, st.zeta, st.theta, st.M, uniforms,
        )
        update_zeta(st, self.hp, self.rng)
        update_alpha(st, self.data.n, self.hp, self.rng)
        update_M(st, self.data, self.hp, self.rng, self.cache)
        self.proposals["theta_rw"] += 1
        if update_theta_rw(st, self.data, self.hp, self.rng, self.cache, adapt=adapt):
            self.accepts["theta_rw"] += 1
        self.proposals["joint_m_theta"] += 1
        if update_joint_M_theta(st, self.data, self.hp, self.rng, self.cache, adapt=adapt):
            self.accepts["joint_m_theta"] += 1

    def run(self, schedule: _mcmc.Schedule):
        """Generator of retained state copies."""
        for t in range(1, schedule.iterations + 1):
            self.sweep(adapt=t <= schedule.burn_in)
            if schedule.keep(t):
                yield self.state.copy()

    def acceptance_rates(self) -> dict[str, float]:
        return {
            k: (self.accepts[k] / self.proposals[k] if self.proposals[k] else math.nan)
            for k in self.accepts
        }


def run_chain(data: SurvivalDataset, hp: DpHyperparams, schedule: _mcmc.Schedule, rng):
    """Stream of retained DpChainState draws; deterministic given the rng seed."""
    yield from DpSampler(data, hp, rng).run(schedule)
