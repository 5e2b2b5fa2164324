# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: Erlang log-pdf/log-survival tables and the
Pólya-urn sweeps. Mirrors erlmix._pykernels (same bookkeeping, same RNG
consumption: 3 uniforms per observation for the one-group sweep, 4 for the
two-group sweep)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport (INFINITY, ceil, exp, expm1, isinf, lgamma, log,
                        log1p, nextafter, sqrt)
from scipy.special.cython_special cimport ndtr, ndtri

from erlmix.errors import NumericError

cnp.import_array()

BACKEND_NAME = "cython"

cdef double EDGE_EPS = 1e-12


cdef inline double _logaddexp(double a, double b):
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline double _min(double a, double b):
    return a if a < b else b


def logpdf_table(t, Py_ssize_t mmax, double theta):
    """(len(t), mmax) matrix of log Ga(t | m, theta), m = 1..mmax."""
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0]
    out_arr = np.empty((n, mmax))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] lgam = np.empty(mmax)
    cdef Py_ssize_t i, m
    cdef double lt, lam, ltheta = log(theta)
    for m in range(mmax):
        lgam[m] = lgamma(m + 1.0)
    for i in range(n):
        lt = log(tv[i])
        lam = tv[i] / theta
        for m in range(mmax):
            out[i, m] = m * lt - lam - (m + 1) * ltheta - lgam[m]
    return out_arr


def logsf_table(t, Py_ssize_t mmax, double theta):
    """(len(t), mmax) matrix of log S_Ga(t | m, theta): log-space Poisson
    partial sums, finite in both tails."""
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = tv.shape[0]
    out_arr = np.empty((n, mmax))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] lgam = np.empty(mmax)
    cdef Py_ssize_t i, k
    cdef double lam, loglam, acc, term
    for k in range(mmax):
        lgam[k] = lgamma(k + 1.0)
    for i in range(n):
        lam = tv[i] / theta
        loglam = log(lam)
        acc = -lam
        out[i, 0] = _min(acc, 0.0)
        for k in range(1, mmax):
            term = k * loglam - lam - lgam[k]
            acc = _logaddexp(acc, term)
            out[i, k] = _min(acc, 0.0)
    return out_arr


def log_kernel_table(y, nu, Py_ssize_t mmax, double theta):
    """nu-combined rows: log pdf where nu=1, log survival where nu=0."""
    cdef cnp.int8_t[::1] nv = np.ascontiguousarray(nu, dtype=np.int8)
    lp = logpdf_table(y, mmax, theta)
    ls = logsf_table(y, mmax, theta)
    cdef double[:, ::1] lpv = lp
    cdef double[:, ::1] lsv = ls
    cdef Py_ssize_t i, m, n = nv.shape[0]
    for i in range(n):
        if nv[i] == 1:
            for m in range(mmax):
                lsv[i, m] = lpv[i, m]
    return ls


cdef inline double _clamp_inside(double x, double lo, double hi):
    cdef double inside = nextafter(lo, INFINITY)
    cdef double rel
    if lo > 0:
        rel = lo * (1.0 + 2.0 * EDGE_EPS)
        if rel > inside:
            inside = rel
    if x < inside:
        x = inside
    if x > hi:
        x = hi
    return x


cdef inline Py_ssize_t _component_of(double phi, Py_ssize_t M, double theta):
    cdef double r = (phi / theta) * (1.0 - EDGE_EPS)
    cdef Py_ssize_t b = <Py_ssize_t>ceil(r)
    if b < 1:
        b = 1
    if b > M:
        b = M
    return b


cdef inline double _trunc_exp(double zeta, double lo, double hi, double u):
    cdef double x
    if isinf(hi):
        x = lo - zeta * log1p(-u)
    else:
        x = lo - zeta * log1p(u * expm1(-(hi - lo) / zeta))
    return _clamp_inside(x, lo, hi)


cdef inline double _trunc_lognormal(double mu, double sigma, double lo, double hi, double u):
    cdef double s_lo = 1.0 if lo == 0 else ndtr(-(log(lo) - mu) / sigma)
    cdef double s_hi = 0.0 if isinf(hi) else ndtr(-(log(hi) - mu) / sigma)
    cdef double s_x = s_lo - u * (s_lo - s_hi)
    if s_x <= 0.0:
        return hi
    return _clamp_inside(exp(mu + sigma * (-ndtri(s_x))), lo, hi)


cdef Py_ssize_t _remove_from_cluster(
    Py_ssize_t i,
    cnp.int64_t[::1] labels,
    double[::1] atomsA,
    double[::1] atomsB,
    cnp.int64_t[::1] abinsA,
    cnp.int64_t[::1] abinsB,
    cnp.int64_t[::1] counts,
    Py_ssize_t k_count,
    bint bivariate,
):
    cdef Py_ssize_t c = labels[i]
    cdef Py_ssize_t last, j, n = labels.shape[0]
    counts[c] -= 1
    if counts[c] == 0:
        last = k_count - 1
        if c != last:
            atomsA[c] = atomsA[last]
            abinsA[c] = abinsA[last]
            if bivariate:
                atomsB[c] = atomsB[last]
                abinsB[c] = abinsB[last]
            counts[c] = counts[last]
            for j in range(n):
                if labels[j] == last:
                    labels[j] = c
        k_count -= 1
    labels[i] = -1
    return k_count


cdef inline Py_ssize_t _pick_from_cum(double[::1] cum, Py_ssize_t size, double u):
    cdef double target = u * cum[size - 1]
    cdef Py_ssize_t j
    for j in range(size):
        if cum[j] > target:
            return j
    return size - 1


def dp_phi_sweep(
    double[:, ::1] log_kernel,
    double[::1] log_g,
    double[::1] log_q0,
    double[::1] phi,
    cnp.int64_t[::1] labels,
    double[::1] atoms,
    cnp.int64_t[::1] abins,
    cnp.int64_t[::1] counts,
    Py_ssize_t k_count,
    double alpha,
    double zeta,
    double theta,
    Py_ssize_t M,
    double[::1] uniforms,
):
    """One Pólya-urn pass over all observations; returns the new cluster count."""
    cdef Py_ssize_t n = phi.shape[0]
    cdef double log_alpha = log(alpha)
    cdef double[::1] buf = np.empty(n + 1 if n + 1 > M else M)
    cdef Py_ssize_t i, j, m
    cdef double u_choice, u_bin, u_tail, mx, acc, lw, lo, hi, val
    for i in range(n):
        u_choice = uniforms[3 * i]
        u_bin = uniforms[3 * i + 1]
        u_tail = uniforms[3 * i + 2]
        k_count = _remove_from_cluster(i, labels, atoms, None, abins, None, counts, k_count, 0)
        mx = -INFINITY
        for j in range(k_count):
            lw = log(<double>counts[j]) + log_kernel[i, abins[j] - 1]
            buf[j] = lw
            if lw > mx:
                mx = lw
        lw = log_alpha + log_q0[i]
        buf[k_count] = lw
        if lw > mx:
            mx = lw
        if mx == -INFINITY:
            raise NumericError("all urn weights underflowed to zero")
        acc = 0.0
        for j in range(k_count + 1):
            acc += exp(buf[j] - mx)
            buf[j] = acc
        j = _pick_from_cum(buf, k_count + 1, u_choice)
        if j < k_count:
            labels[i] = j
            counts[j] += 1
            phi[i] = atoms[j]
        else:
            mx = -INFINITY
            for m in range(M):
                lw = log_g[m] + log_kernel[i, m]
                buf[m] = lw
                if lw > mx:
                    mx = lw
            if mx == -INFINITY:
                raise NumericError("all bin weights underflowed to zero")
            acc = 0.0
            for m in range(M):
                acc += exp(buf[m] - mx)
                buf[m] = acc
            m = _pick_from_cum(buf, M, u_bin) + 1
            lo = (m - 1) * theta
            hi = m * theta if m < M else INFINITY
            val = _trunc_exp(zeta, lo, hi, u_tail)
            atoms[k_count] = val
            abins[k_count] = m
            counts[k_count] = 1
            labels[i] = k_count
            phi[i] = val
            k_count += 1
    return k_count


cdef void _ln_bin_log_masses(double* out, Py_ssize_t M, double theta, double mu, double sigma):
    """log masses of ((m-1)theta, m*theta] under LN(mu, sigma^2); the last
    bin absorbs the upper tail. Matches _pykernels.lognormal_bin_log_masses."""
    cdef Py_ssize_t m
    cdef double z, lo_cdf, lo_sf, hi_cdf, hi_sf, mass
    lo_cdf = 0.0
    lo_sf = 1.0
    for m in range(1, M + 1):
        if m < M:
            z = (log(m * theta) - mu) / sigma
            hi_cdf = ndtr(z)
            hi_sf = ndtr(-z)
        else:
            hi_cdf = 1.0
            hi_sf = 0.0
        if hi_cdf <= 0.5:
            mass = hi_cdf - lo_cdf
        else:
            mass = lo_sf - hi_sf
        out[m - 1] = log(mass) if mass > 0.0 else -INFINITY
        lo_cdf = hi_cdf
        lo_sf = hi_sf


def ddp_phi_sweep(
    double[:, ::1] log_kernel_C,
    double[:, ::1] log_kernel_T,
    cnp.int64_t[::1] row_of,
    cnp.int8_t[::1] group,
    double[::1] log_q0,
    double[::1] phiC,
    double[::1] phiT,
    cnp.int64_t[::1] labels,
    double[::1] atomsC,
    double[::1] atomsT,
    cnp.int64_t[::1] abinsC,
    cnp.int64_t[::1] abinsT,
    cnp.int64_t[::1] counts,
    Py_ssize_t k_count,
    double alpha,
    mu,
    Sigma,
    double theta_C,
    double theta_T,
    Py_ssize_t M_C,
    Py_ssize_t M_T,
    double[::1] uniforms,
):
    """Two-group urn pass over bivariate latent pairs; returns new cluster count."""
    cdef Py_ssize_t n = phiC.shape[0]
    cdef double log_alpha = log(alpha)
    cdef double mu1 = mu[0], mu2 = mu[1]
    cdef double s11 = Sigma[0, 0], s12 = Sigma[0, 1], s22 = Sigma[1, 1]
    cdef Py_ssize_t cap = n + 1
    if M_C > cap:
        cap = M_C
    if M_T > cap:
        cap = M_T
    cdef double[::1] buf = np.empty(cap)
    cdef double[::1] massbuf = np.empty(M_C if M_C > M_T else M_T)
    cdef Py_ssize_t i, j, m, M_own, M_oth
    cdef bint own_C
    cdef double u_choice, u_marg, u_bin, u_cond, mx, acc, lw
    cdef double mu_marg, var_marg, mu_own, var_own, theta_own, theta_oth
    cdef double new_other, new_own, mu_c, sig_c, lo, hi
    cdef double[:, ::1] krows
    cdef cnp.int64_t[::1] abins_own
    for i in range(n):
        u_choice = uniforms[4 * i]
        u_marg = uniforms[4 * i + 1]
        u_bin = uniforms[4 * i + 2]
        u_cond = uniforms[4 * i + 3]
        k_count = _remove_from_cluster(i, labels, atomsC, atomsT, abinsC, abinsT, counts, k_count, 1)
        own_C = group[i] == 0
        krows = log_kernel_C if own_C else log_kernel_T
        abins_own = abinsC if own_C else abinsT
        mx = -INFINITY
        for j in range(k_count):
            lw = log(<double>counts[j]) + krows[row_of[i], abins_own[j] - 1]
            buf[j] = lw
            if lw > mx:
                mx = lw
        lw = log_alpha + log_q0[i]
        buf[k_count] = lw
        if lw > mx:
            mx = lw
        if mx == -INFINITY:
            raise NumericError("all urn weights underflowed to zero")
        acc = 0.0
        for j in range(k_count + 1):
            acc += exp(buf[j] - mx)
            buf[j] = acc
        j = _pick_from_cum(buf, k_count + 1, u_choice)
        if j < k_count:
            labels[i] = j
            counts[j] += 1
            phiC[i] = atomsC[j]
            phiT[i] = atomsT[j]
        else:
            if own_C:
                mu_marg = mu2; var_marg = s22
                mu_own = mu1; var_own = s11
                theta_own = theta_C; M_own = M_C
                theta_oth = theta_T; M_oth = M_T
            else:
                mu_marg = mu1; var_marg = s11
                mu_own = mu2; var_own = s22
                theta_own = theta_T; M_own = M_T
                theta_oth = theta_C; M_oth = M_C
            new_other = exp(mu_marg + sqrt(var_marg) * ndtri(u_marg))
            mu_c = mu_own + (s12 / var_marg) * (log(new_other) - mu_marg)
            sig_c = sqrt(var_own - s12 * s12 / var_marg)
            _ln_bin_log_masses(&massbuf[0], M_own, theta_own, mu_c, sig_c)
            mx = -INFINITY
            for m in range(M_own):
                lw = massbuf[m] + krows[row_of[i], m]
                buf[m] = lw
                if lw > mx:
                    mx = lw
            if mx == -INFINITY:
                raise NumericError("all bin weights underflowed to zero")
            acc = 0.0
            for m in range(M_own):
                acc += exp(buf[m] - mx)
                buf[m] = acc
            m = _pick_from_cum(buf, M_own, u_bin) + 1
            lo = (m - 1) * theta_own
            hi = m * theta_own if m < M_own else INFINITY
            new_own = _trunc_lognormal(mu_c, sig_c, lo, hi, u_cond)
            if own_C:
                atomsC[k_count] = new_own
                atomsT[k_count] = new_other
                abinsC[k_count] = m
                abinsT[k_count] = _component_of(new_other, M_oth, theta_oth)
            else:
                atomsT[k_count] = new_own
                atomsC[k_count] = new_other
                abinsT[k_count] = m
                abinsC[k_count] = _component_of(new_other, M_oth, theta_oth)
            counts[k_count] = 1
            labels[i] = k_count
            phiC[i] = atomsC[k_count]
            phiT[i] = atomsT[k_count]
            k_count += 1
    return k_count
