"""Pure-Python twin of the compiled kernels in ``erlmix._speedups``.

Table builders are vectorized numpy; the urn sweeps are sequential Python
loops with the same bookkeeping and RNG consumption as the Cython code
(three uniforms per observation for the one-group sweep, four for the
two-group sweep, whether or not the draw reuses an atom).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, ndtr, ndtri

from erlmix.errors import NumericError
from erlmix.special import component_of, truncated_exp_sample, _clamp_inside

BACKEND_NAME = "python"

_NEG_INF = float("-inf")


def logpdf_table(t, mmax, theta):
    """(len(t), mmax) matrix of log Ga(t | m, theta), m = 1..mmax."""
    t = np.asarray(t, dtype=float)
    m = np.arange(1, mmax + 1, dtype=float)
    return (
        (m - 1.0) * np.log(t)[:, None]
        - (t / theta)[:, None]
        - m * math.log(theta)
        - gammaln(m)
    )


def logsf_table(t, mmax, theta):
    """(len(t), mmax) matrix of log S_Ga(t | m, theta), m = 1..mmax.

    Column m-1 accumulates the Poisson partial sum over k = 0..m-1 in log
    space, so the result stays finite far into either tail.
    """
    t = np.asarray(t, dtype=float)
    lam = t / theta
    k = np.arange(mmax, dtype=float)
    logterms = k * np.log(lam)[:, None] - lam[:, None] - gammaln(k + 1.0)
    return np.minimum(np.logaddexp.accumulate(logterms, axis=1), 0.0)


def log_kernel_table(y, nu, mmax, theta):
    """nu-combined rows: log pdf where nu=1, log survival where nu=0."""
    y = np.asarray(y, dtype=float)
    nu = np.asarray(nu)
    return np.where((nu == 1)[:, None], logpdf_table(y, mmax, theta), logsf_table(y, mmax, theta))


def _pick(cum: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cum, u * cum[-1], side="right").clip(max=len(cum) - 1))


def _remove_from_cluster(i, labels, atomsA, atomsB, abinsA, abinsB, counts, k_count):
    """Drop observation i from its cluster; swap-delete the cluster if empty."""
    c = labels[i]
    counts[c] -= 1
    if counts[c] == 0:
        last = k_count - 1
        if c != last:
            atomsA[c] = atomsA[last]
            abinsA[c] = abinsA[last]
            if atomsB is not None:
                atomsB[c] = atomsB[last]
                abinsB[c] = abinsB[last]
            counts[c] = counts[last]
            labels[labels == last] = c
        k_count -= 1
    labels[i] = -1
    return k_count


def dp_phi_sweep(
    log_kernel,
    log_g,
    log_q0,
    phi,
    labels,
    atoms,
    abins,
    counts,
    k_count,
    alpha,
    zeta,
    theta,
    M,
    uniforms,
):
    """One Pólya-urn pass over all observations; returns the new cluster count.

    phi, labels, atoms, abins and counts are mutated in place. atoms/abins/
    counts have capacity n; the first k_count entries are live clusters.
    """
    n = phi.shape[0]
    log_alpha = math.log(alpha)
    for i in range(n):
        u_choice = uniforms[3 * i]
        u_bin = uniforms[3 * i + 1]
        u_tail = uniforms[3 * i + 2]
        k_count = _remove_from_cluster(i, labels, atoms, None, abins, None, counts, k_count)
        krow = log_kernel[i]
        lw = np.empty(k_count + 1)
        for j in range(k_count):
            lw[j] = math.log(counts[j]) + krow[abins[j] - 1]
        lw[k_count] = log_alpha + log_q0[i]
        mx = lw.max()
        if mx == _NEG_INF:
            raise NumericError("all urn weights underflowed to zero")
        cum = np.cumsum(np.exp(lw - mx))
        j = _pick(cum, u_choice)
        if j < k_count:
            labels[i] = j
            counts[j] += 1
            phi[i] = atoms[j]
        else:
            lb = log_g + krow[:M]
            mxb = lb.max()
            if mxb == _NEG_INF:
                raise NumericError("all bin weights underflowed to zero")
            cumb = np.cumsum(np.exp(lb - mxb))
            m = _pick(cumb, u_bin) + 1
            lo = (m - 1) * theta
            hi = m * theta if m < M else math.inf
            val = truncated_exp_sample(zeta, lo, hi, u_tail)
            atoms[k_count] = val
            abins[k_count] = m
            counts[k_count] = 1
            labels[i] = k_count
            phi[i] = val
            k_count += 1
    return k_count


def lognormal_bin_log_masses(M, theta, mu, sigma):
    """(M,) log masses of the bins ((m-1)theta, m*theta] under LN(mu, sigma^2).

    Differences are taken on whichever side of the normal CDF keeps relative
    precision; the last bin absorbs the upper tail.
    """
    edges = np.arange(1, M, dtype=float) * theta
    z = (np.log(edges) - mu) / sigma
    cdf = ndtr(z)
    sf = ndtr(-z)
    lower_cdf = np.concatenate(([0.0], cdf))
    upper_cdf = np.concatenate((cdf, [1.0]))
    lower_sf = np.concatenate(([1.0], sf))
    upper_sf = np.concatenate((sf, [0.0]))
    use_cdf = upper_cdf <= ndtr(0.0)
    mass = np.where(use_cdf, upper_cdf - lower_cdf, lower_sf - upper_sf)
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(mass, 0.0))


def ddp_phi_sweep(
    log_kernel_C,
    log_kernel_T,
    row_of,
    group,
    log_q0,
    phiC,
    phiT,
    labels,
    atomsC,
    atomsT,
    abinsC,
    abinsT,
    counts,
    k_count,
    alpha,
    mu,
    Sigma,
    theta_C,
    theta_T,
    M_C,
    M_T,
    uniforms,
):
    """Two-group urn pass over bivariate latent pairs; returns new cluster count.

    group holds 0 for control and 1 for treatment; row_of[i] indexes the
    observation's row inside its group's kernel table. A fresh pair draws the
    unobserved coordinate from its lognormal marginal, then the observed
    coordinate from the bin-truncated conditional given that new value.
    """
    n = phiC.shape[0]
    log_alpha = math.log(alpha)
    mu1, mu2 = float(mu[0]), float(mu[1])
    s11, s12, s22 = float(Sigma[0, 0]), float(Sigma[0, 1]), float(Sigma[1, 1])
    for i in range(n):
        u_choice = uniforms[4 * i]
        u_marg = uniforms[4 * i + 1]
        u_bin = uniforms[4 * i + 2]
        u_cond = uniforms[4 * i + 3]
        k_count = _remove_from_cluster(i, labels, atomsC, atomsT, abinsC, abinsT, counts, k_count)
        own_C = group[i] == 0
        krow = log_kernel_C[row_of[i]] if own_C else log_kernel_T[row_of[i]]
        abins_own = abinsC if own_C else abinsT
        lw = np.empty(k_count + 1)
        for j in range(k_count):
            lw[j] = math.log(counts[j]) + krow[abins_own[j] - 1]
        lw[k_count] = log_alpha + log_q0[i]
        mx = lw.max()
        if mx == _NEG_INF:
            raise NumericError("all urn weights underflowed to zero")
        cum = np.cumsum(np.exp(lw - mx))
        j = _pick(cum, u_choice)
        if j < k_count:
            labels[i] = j
            counts[j] += 1
            phiC[i] = atomsC[j]
            phiT[i] = atomsT[j]
        else:
            if own_C:
                mu_marg, var_marg = mu2, s22
                mu_own, var_own = mu1, s11
                theta_own, M_own = theta_C, M_C
                theta_oth, M_oth = theta_T, M_T
            else:
                mu_marg, var_marg = mu1, s11
                mu_own, var_own = mu2, s22
                theta_own, M_own = theta_T, M_T
                theta_oth, M_oth = theta_C, M_C
            new_other = math.exp(mu_marg + math.sqrt(var_marg) * ndtri(u_marg))
            mu_c = mu_own + (s12 / var_marg) * (math.log(new_other) - mu_marg)
            sig_c = math.sqrt(var_own - s12 * s12 / var_marg)
            lb = lognormal_bin_log_masses(M_own, theta_own, mu_c, sig_c) + krow[:M_own]
            mxb = lb.max()
            if mxb == _NEG_INF:
                raise NumericError("all bin weights underflowed to zero")
            cumb = np.cumsum(np.exp(lb - mxb))
            m = _pick(cumb, u_bin) + 1
            lo = (m - 1) * theta_own
            hi = m * theta_own if m < M_own else math.inf
            new_own = _trunc_lognormal(mu_c, sig_c, lo, hi, u_cond)
            if own_C:
                atomsC[k_count], atomsT[k_count] = new_own, new_other
                abinsC[k_count] = m
                abinsT[k_count] = component_of(new_other, M_oth, theta_oth)
            else:
                atomsT[k_count], atomsC[k_count] = new_own, new_other
                abinsT[k_count] = m
                abinsC[k_count] = component_of(new_other, M_oth, theta_oth)
            counts[k_count] = 1
            labels[i] = k_count
            phiC[i] = atomsC[k_count]
            phiT[i] = atomsT[k_count]
            k_count += 1
    return k_count


def _trunc_lognormal(mu, sigma, lo, hi, u):
    s_lo = 1.0 if lo == 0 else ndtr(-(math.log(lo) - mu) / sigma)
    s_hi = 0.0 if math.isinf(hi) else ndtr(-(math.log(hi) - mu) / sigma)
    s_x = s_lo - u * (s_lo - s_hi)
    if s_x <= 0.0:
        return hi
    return _clamp_inside(math.exp(mu + sigma * (-ndtri(s_x))), lo, hi)
