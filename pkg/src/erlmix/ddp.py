"""MCMC for the two-group common-weights DDP Erlang mixture.

Latent atoms are bivariate: each observation carries a pair (phi_C, phi_T)
drawn from the urn over a bivariate lognormal base measure, and only the
coordinate matching the observation's group enters its likelihood. Group
scales are updated jointly with an adaptive bivariate log-scale proposal
(0.95 N(., 2.38^2/2 Sigma_n) + 0.05 N(., 0.01/2 I)); the base-measure
location mu has a conjugate bivariate normal update on the distinct pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from erlmix import _backend, _mcmc
from erlmix.errors import ConfigError, NumericError
from erlmix.mixture import GROUP_C, GROUP_T, SurvivalDataset, WeightVector, latent_components
from erlmix.dp import (KernelCache, PolyaUrnWeights, _augmented_loglik,
                       _candidate_logliks, _kernel_row, _unclamped_bins)
from erlmix.special import (BivariateNormalParams, LogNormalParams,
                            bln_conditional, truncated_lognormal_sample)

__all__ = [
    "DdpHyperparams",
    "DdpChainState",
    "GroupWeightPair",
    "lognormal_bin_log_masses_matrix",
    "polya_urn_weights_ddp",
    "update_M_x",
    "update_theta_pair",
    "update_mu",
    "update_alpha_ddp",
    "update_phi_pair",
    "run_chain_ddp",
    "DdpSampler",
]

ADAPT_WARMUP = 100


def _check_pd(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (2, 2) or not np.allclose(mat, mat.T):
        raise ConfigError(f"{name} must be a symmetric 2x2 matrix")
    if mat[0, 0] <= 0 or mat[1, 1] <= 0 or np.linalg.det(mat) <= 0:
        raise ConfigError(f"{name} must be positive definite")
    return mat


@dataclass(frozen=True)
class DdpHyperparams:
    """Per-group Ga(shape, scale) priors on theta_x, per-group (M_x1, M_x2)
    ranges, the N2(mu_bar, Sigma0) hyperprior on mu, the fixed base-measure
    covariance Sigma, and the Ga(a_alpha, b_alpha) prior on the total mass."""

    a_theta_C: float
    b_theta_C: float
    a_theta_T: float
    b_theta_T: float
    M1_C: float
    M2_C: float
    M1_T: float
    M2_T: float
    mu_bar: np.ndarray
    Sigma0: np.ndarray
    Sigma: np.ndarray
    a_alpha: float
    b_alpha: float

    def __post_init__(self):
        for name in ("a_theta_C", "b_theta_C", "a_theta_T", "b_theta_T", "a_alpha", "b_alpha"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("M1_C", "M1_T"):
            if not getattr(self, name) >= 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (self.M2_C >= self.M1_C and self.M2_T >= self.M1_T):
            raise ConfigError("M_x2 must be >= M_x1 for both groups")
        mu_bar = np.asarray(self.mu_bar, dtype=float)
        if mu_bar.shape != (2,):
            raise ConfigError("mu_bar must be a 2-vector")
        object.__setattr__(self, "mu_bar", mu_bar)
        object.__setattr__(self, "Sigma0", _check_pd("Sigma0", self.Sigma0))
        object.__setattr__(self, "Sigma", _check_pd("Sigma", self.Sigma))

    def theta_prior(self, group: int) -> tuple[float, float]:
        return (self.a_theta_C, self.b_theta_C) if group == GROUP_C else (self.a_theta_T, self.b_theta_T)

    def m_bounds(self, group: int) -> tuple[float, float]:
        return (self.M1_C, self.M2_C) if group == GROUP_C else (self.M1_T, self.M2_T)


@dataclass
class DdpChainState:
    theta_C: float
    theta_T: float
    M_C: int
    M_T: int
    alpha: float
    mu: np.ndarray
    phi: np.ndarray  # (n, 2) latent pairs, column 0 = C coordinate
    adapt_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    adapt_m2: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    adapt_count: int = 0
    iteration: int = 0

    def copy(self) -> "DdpChainState":
        return replace(
            self,
            mu=self.mu.copy(),
            phi=self.phi.copy(),
            adapt_mean=self.adapt_mean.copy(),
            adapt_m2=self.adapt_m2.copy(),
        )

    def theta(self, group: int) -> float:
        return self.theta_C if group == GROUP_C else self.theta_T

    def m_count(self, group: int) -> int:
        return self.M_C if group == GROUP_C else self.M_T

    @property
    def adapt_cov(self) -> np.ndarray:
        if self.adapt_count < 2:
            return np.zeros((2, 2))
        return self.adapt_m2 / (self.adapt_count - 1)


@dataclass(frozen=True)
class GroupWeightPair:
    """Group weight vectors derived from one joint draw of the shared CDF."""

    C: WeightVector
    T: WeightVector


def distinct_pairs(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct latent pairs and their multiplicities (exact bit equality)."""
    atoms, counts = np.unique(np.asarray(phi, dtype=float), axis=0, return_counts=True)
    return atoms, counts


def lognormal_bin_log_masses_matrix(M: int, theta: float, mu_vec: np.ndarray, sigma: float) -> np.ndarray:
    """(len(mu_vec), M) log masses of ((m-1)theta, m*theta] under LN(mu_i, sigma^2),
    last bin absorbing the tail; CDF/survival differencing picked per cell to
    keep relative precision."""
    mu_vec = np.atleast_1d(np.asarray(mu_vec, dtype=float))
    k = mu_vec.shape[0]
    edges = np.arange(1, M, dtype=float) * theta
    z = (np.log(edges)[None, :] - mu_vec[:, None]) / sigma
    cdf = ndtr(z)
    sf = ndtr(-z)
    zeros = np.zeros((k, 1))
    ones = np.ones((k, 1))
    lower_cdf = np.concatenate([zeros, cdf], axis=1)
    upper_cdf = np.concatenate([cdf, ones], axis=1)
    lower_sf = np.concatenate([ones, sf], axis=1)
    upper_sf = np.concatenate([sf, zeros], axis=1)
    mass = np.where(upper_cdf <= 0.5, upper_cdf - lower_cdf, lower_sf - upper_sf)
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(mass, 0.0))


def polya_urn_weights_ddp(
    y_i: float,
    nu_i: int,
    group_i: int,
    other_value: float,
    loo_atoms_own: np.ndarray,
    mu: np.ndarray,
    Sigma: np.ndarray,
    M_own: int,
    theta_own: float,
) -> PolyaUrnWeights:
    """(q0, qj, Omega) for one observation of the two-group model.

    The bin masses come from the lognormal law of the observed-group
    coordinate conditional on the log of other_value (the current value of
    the unobserved coordinate)."""
    cond = bln_conditional(
        BivariateNormalParams(mu, Sigma), given_index=2 if group_i == GROUP_C else 1,
        given_value=other_value,
    )
    krow = _kernel_row(y_i, nu_i, M_own, theta_own)
    log_mass = lognormal_bin_log_masses_matrix(M_own, theta_own, np.array([cond.mu]), cond.sigma)[0]
    terms = log_mass + krow
    mx = terms.max()
    if mx == -math.inf:
        raise NumericError("all bin weights underflowed to zero")
    log_q0 = mx + math.log(np.exp(terms - mx).sum())
    loo_atoms_own = np.asarray(loo_atoms_own, dtype=float)
    if loo_atoms_own.size:
        bins = latent_components(loo_atoms_own, M_own, theta_own)
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


def update_M_x(state: DdpChainState, data: SurvivalDataset, hp: DdpHyperparams, group: int, rng,
               cache: KernelCache | None = None) -> int:
    """Categorical update of one group's component count, restricted to that
    group's observations; a group with no observations draws uniformly."""
    mask = data.group_mask(group)
    theta = state.theta(group)
    M1, M2 = hp.m_bounds(group)
    if cache is None:
        cache = KernelCache(data.y[mask], data.nu[mask], M2)
    table = cache.table_for(theta)
    j_lo, j_hi = _mcmc.m_range(M1, M2, theta)
    bins = _unclamped_bins(state.phi[mask, group], theta)
    ll = _candidate_logliks(table, bins, j_lo, j_hi)
    new_M = j_lo + _mcmc.categorical_from_log(ll, rng.random())
    if group == GROUP_C:
        state.M_C = new_M
    else:
        state.M_T = new_M
    return new_M


def _group_log_target(state: DdpChainState, data: SurvivalDataset, hp: DdpHyperparams,
                      group: int, theta: float, cache: KernelCache) -> float:
    """log of theta_x * Ga(theta_x) * p(M_x|theta_x) * L_x for one group."""
    a, b = hp.theta_prior(group)
    M1, M2 = hp.m_bounds(group)
    M = state.m_count(group)
    prior = _mcmc.log_m_prior(M, M1, M2, theta)
    if prior == -math.inf:
        return -math.inf
    mask = data.group_mask(group)
    table = cache.table_for(theta)
    bins = _unclamped_bins(state.phi[mask, group], theta)
    return (
        math.log(theta)
        + _mcmc.gamma_log_pdf(theta, a, b)
        + prior
        + _augmented_loglik(table, bins, M)
    )


def theta_pair_log_ratio(state: DdpChainState, data: SurvivalDataset, hp: DdpHyperparams,
                         theta_star: np.ndarray, cacheC: KernelCache, cacheT: KernelCache) -> float:
    """log acceptance ratio of the joint (theta_C, theta_T) move. The mixture
    proposal is symmetric on the log scale, so only Jacobians, priors
    (including p(M_x | theta_x)) and likelihoods enter."""
    new = (
        _group_log_target(state, data, hp, GROUP_C, float(theta_star[0]), cacheC)
        + _group_log_target(state, data, hp, GROUP_T, float(theta_star[1]), cacheT)
    )
    if new == -math.inf:
        return -math.inf
    cur = (
        _group_log_target(state, data, hp, GROUP_C, state.theta_C, cacheC)
        + _group_log_target(state, data, hp, GROUP_T, state.theta_T, cacheT)
    )
    return new - cur


def proposal_cov(state: DdpChainState, u_mix: float) -> np.ndarray:
    """Adaptive mixture proposal covariance for log(theta_C, theta_T)."""
    fixed = (0.01 / 2.0) * np.eye(2)
    if state.iteration <= ADAPT_WARMUP or state.adapt_count < 2:
        return fixed
    if u_mix < 0.95:
        return (2.38 ** 2 / 2.0) * state.adapt_cov
    return fixed


def update_theta_pair(state: DdpChainState, data: SurvivalDataset, hp: DdpHyperparams, rng,
                      cacheC: KernelCache | None = None, cacheT: KernelCache | None = None) -> bool:
    """Joint bivariate log-scale MH update of (theta_C, theta_T)."""
    if cacheC is None:
        mask = data.group_mask(GROUP_C)
        cacheC = KernelCache(data.y[mask], data.nu[mask], hp.M2_C)
    if cacheT is None:
        mask = data.group_mask(GROUP_T)
        cacheT = KernelCache(data.y[mask], data.nu[mask], hp.M2_T)
    u_mix = rng.random()
    cov = proposal_cov(state, u_mix)
    cur_log = np.log([state.theta_C, state.theta_T])
    prop_log = _mcmc.sample_mvnormal(rng, cur_log, cov)
    u_acc = rng.random()
    theta_star = np.exp(prop_log)
    log_r = theta_pair_log_ratio(state, data, hp, theta_star, cacheC, cacheT)
    accepted = log_r > 0 or u_acc < math.exp(log_r)
    if accepted:
        state.theta_C = float(theta_star[0])
        state.theta_T = float(theta_star[1])
    return accepted


def update_mu(state: DdpChainState, hp: DdpHyperparams, rng) -> np.ndarray:
    """Conjugate bivariate normal update of the base-measure location from
    the logs of the distinct atom pairs."""
    atoms, _ = distinct_pairs(state.phi)
    n_star = atoms.shape[0]
    prec0 = np.linalg.inv(hp.Sigma0)
    prec = np.linalg.inv(hp.Sigma)
    cov1 = np.linalg.inv(prec0 + n_star * prec)
    total = np.log(atoms).sum(axis=0) if n_star else np.zeros(2)
    mean1 = cov1 @ (prec0 @ hp.mu_bar + prec @ total)
    state.mu = _mcmc.sample_mvnormal(rng, mean1, cov1)
    return state.mu


def update_alpha_ddp(state: DdpChainState, n: int, hp: DdpHyperparams, rng) -> float:
    atoms, _ = distinct_pairs(state.phi)
    state.alpha = _mcmc.escobar_west_alpha(
        rng, state.alpha, n, atoms.shape[0], hp.a_alpha, hp.b_alpha
    )
    return state.alpha


def update_phi_pair(state: DdpChainState, data: SurvivalDataset, i: int, rng,
                    hp: DdpHyperparams) -> tuple[float, float]:
    """Urn update of one latent pair (reference implementation; the chain
    driver uses the backend sweep). Consumes four uniforms."""
    u_choice, u_marg, u_bin, u_cond = rng.random(4)
    g = int(data.x[i])
    own, oth = (0, 1) if g == GROUP_C else (1, 0)
    theta_own = state.theta(g)
    M_own = state.m_count(g)
    loo = np.delete(state.phi, i, axis=0)
    atoms, counts = distinct_pairs(loo)
    urn = polya_urn_weights_ddp(
        data.y[i], int(data.nu[i]), g, float(state.phi[i, oth]), atoms[:, own],
        state.mu, hp.Sigma, M_own, theta_own,
    )
    logw = np.concatenate((np.log(counts) + urn.log_qj,
                           [math.log(state.alpha) + urn.log_q0]))
    j = _mcmc.categorical_from_log(logw, u_choice)
    if j < atoms.shape[0]:
        state.phi[i] = atoms[j]
    else:
        mu_oth = state.mu[oth]
        var_oth = hp.Sigma[oth, oth]
        new_other = math.exp(mu_oth + math.sqrt(var_oth) * ndtri(u_marg))
        cond = bln_conditional(
            BivariateNormalParams(state.mu, hp.Sigma),
            given_index=oth + 1, given_value=new_other,
        )
        log_mass = lognormal_bin_log_masses_matrix(M_own, theta_own, np.array([cond.mu]), cond.sigma)[0]
        krow = _kernel_row(data.y[i], int(data.nu[i]), M_own, theta_own)
        m = 1 + _mcmc.categorical_from_log(log_mass + krow, u_bin)
        lo = (m - 1) * theta_own
        hi = m * theta_own if m < M_own else math.inf
        new_own = truncated_lognormal_sample(LogNormalParams(cond.mu, cond.sigma2), lo, hi, u_cond)
        pair = np.empty(2)
        pair[own] = new_own
        pair[oth] = new_other
        state.phi[i] = pair
    return float(state.phi[i, 0]), float(state.phi[i, 1])


def initial_state_ddp(data: SurvivalDataset, hp: DdpHyperparams) -> DdpChainState:
    """Prior-mean scalars; each latent pair starts at the observation value in
    both coordinates, clipped into each group's initial support."""
    theta0_C = hp.a_theta_C * hp.b_theta_C
    theta0_T = hp.a_theta_T * hp.b_theta_T
    lo_C, hi_C = _mcmc.m_range(hp.M1_C, hp.M2_C, theta0_C)
    lo_T, hi_T = _mcmc.m_range(hp.M1_T, hp.M2_T, theta0_T)
    M0_C = (lo_C + hi_C) // 2
    M0_T = (lo_T + hi_T) // 2
    phi0 = np.empty((data.n, 2))
    phi0[:, 0] = np.minimum(data.y, M0_C * theta0_C * (1.0 + 1e-6))
    phi0[:, 1] = np.minimum(data.y, M0_T * theta0_T * (1.0 + 1e-6))
    return DdpChainState(
        theta_C=theta0_C, theta_T=theta0_T, M_C=M0_C, M_T=M0_T,
        alpha=hp.a_alpha * hp.b_alpha, mu=hp.mu_bar.copy(), phi=phi0,
    )


class DdpSampler:
    """Adaptive Metropolis-within-Gibbs driver for the two-group model."""

    def __init__(self, data: SurvivalDataset, hp: DdpHyperparams, rng):
        if data.n == 0:
            raise ConfigError("dataset must be non-empty")
        if data.x is None:
            raise ConfigError("two-group sampler needs group labels")
        n_C = int(np.sum(data.x == GROUP_C))
        if n_C == 0 or n_C == data.n:
            raise ConfigError(
                "both groups must be represented; use the one-group sampler for single-group data"
            )
        self.data = data
        self.hp = hp
        self.rng = rng
        self.state = initial_state_ddp(data, hp)
        self.maskC = data.group_mask(GROUP_C)
        self.maskT = data.group_mask(GROUP_T)
        self.cacheC = KernelCache(data.y[self.maskC], data.nu[self.maskC], hp.M2_C)
        self.cacheT = KernelCache(data.y[self.maskT], data.nu[self.maskT], hp.M2_T)
        self.accepts = {"theta_pair": 0}
        self.proposals = {"theta_pair": 0}
        n = data.n
        self.row_of = np.empty(n, dtype=np.int64)
        self.row_of[self.maskC] = np.arange(n_C)
        self.row_of[self.maskT] = np.arange(n - n_C)
        self.group = data.x.astype(np.int8)
        self._labels = np.empty(n, dtype=np.int64)
        self._atomsC = np.empty(n, dtype=float)
        self._atomsT = np.empty(n, dtype=float)
        self._abinsC = np.empty(n, dtype=np.int64)
        self._abinsT = np.empty(n, dtype=np.int64)
        self._counts = np.empty(n, dtype=np.int64)
        self._k = 0
        self._rebuild_clusters()

    def _rebuild_clusters(self) -> None:
        atoms, inverse, counts = np.unique(
            self.state.phi, axis=0, return_inverse=True, return_counts=True
        )
        k = atoms.shape[0]
        self._atomsC[:k] = atoms[:, 0]
        self._atomsT[:k] = atoms[:, 1]
        self._counts[:k] = counts
        self._labels[:] = inverse.reshape(-1)
        self._k = k

    def _log_q0_vector(self) -> np.ndarray:
        st = self.state
        Sigma = self.hp.Sigma
        s11, s12, s22 = Sigma[0, 0], Sigma[0, 1], Sigma[1, 1]
        mu1, mu2 = st.mu
        n = self.data.n
        log_q0 = np.empty(n)
        sig_C = math.sqrt(s11 - s12 * s12 / s22)
        sig_T = math.sqrt(s22 - s12 * s12 / s11)
        for group, mask, sig, table, M, theta in (
            (GROUP_C, self.maskC, sig_C, self.cacheC.table_for(st.theta_C), st.M_C, st.theta_C),
            (GROUP_T, self.maskT, sig_T, self.cacheT.table_for(st.theta_T), st.M_T, st.theta_T),
        ):
            oth = 1 - group
            mu_own = (mu1, mu2)[group]
            mu_oth = (mu1, mu2)[oth]
            var_oth = (s11, s22)[oth]
            mu_cond = mu_own + (s12 / var_oth) * (np.log(st.phi[mask, oth]) - mu_oth)
            masses = lognormal_bin_log_masses_matrix(M, theta, mu_cond, sig)
            terms = masses + table[:, :M]
            mx = terms.max(axis=1)
            log_q0[mask] = mx + np.log(np.exp(terms - mx[:, None]).sum(axis=1))
        return log_q0

    def sweep(self, adapt: bool = True) -> None:
        st = self.state
        st.iteration += 1
        tableC = self.cacheC.table_for(st.theta_C)
        tableT = self.cacheT.table_for(st.theta_T)
        self._abinsC[: self._k] = latent_components(self._atomsC[: self._k], st.M_C, st.theta_C)
        self._abinsT[: self._k] = latent_components(self._atomsT[: self._k], st.M_T, st.theta_T)
        log_q0 = self._log_q0_vector()
        uniforms = self.rng.random(4 * self.data.n)
        phiC = np.ascontiguousarray(st.phi[:, 0])
        phiT = np.ascontiguousarray(st.phi[:, 1])
        self._k = _backend.ddp_phi_sweep(
            tableC, tableT, self.row_of, self.group, log_q0, phiC, phiT,
            self._labels, self._atomsC, self._atomsT, self._abinsC, self._abinsT,
            self._counts, self._k, st.alpha, st.mu, self.hp.Sigma,
            st.theta_C, st.theta_T, st.M_C, st.M_T, uniforms,
        )
        st.phi[:, 0] = phiC
        st.phi[:, 1] = phiT
        update_mu(st, self.hp, self.rng)
        update_alpha_ddp(st, self.data.n, self.hp, self.rng)
        update_M_x(st, self.data, self.hp, GROUP_C, self.rng, self.cacheC)
        update_M_x(st, self.data, self.hp, GROUP_T, self.rng, self.cacheT)
        self.proposals["theta_pair"] += 1
        if update_theta_pair(st, self.data, self.hp, self.rng, self.cacheC, self.cacheT):
            self.accepts["theta_pair"] += 1
        if adapt:
            self._update_adaptation()

    def _update_adaptation(self) -> None:
        st = self.state
        x = np.log([st.theta_C, st.theta_T])
        st.adapt_count += 1
        delta = x - st.adapt_mean
        st.adapt_mean = st.adapt_mean + delta / st.adapt_count
        st.adapt_m2 = st.adapt_m2 + np.outer(delta, x - st.adapt_mean)

    def run(self, schedule: _mcmc.Schedule):
        for t in range(1, schedule.iterations + 1):
            self.sweep(adapt=t <= schedule.burn_in)
            if schedule.keep(t):
                yield self.state.copy()

    def acceptance_rates(self) -> dict[str, float]:
        return {
            k: (self.accepts[k] / self.proposals[k] if self.proposals[k] else math.nan)
            for k in self.accepts
        }


def run_chain_ddp(data: SurvivalDataset, hp: DdpHyperparams, schedule: _mcmc.Schedule, rng):
    """Stream of retained DdpChainState draws; deterministic given the rng seed."""
    yield from DdpSampler(data, hp, rng).run(schedule)
