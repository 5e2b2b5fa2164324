"""Agreement between the compiled kernels and the pure-Python twin."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from erlmix import _pykernels
from erlmix.dp import exp_bin_log_masses
from erlmix.mixture import latent_components

speedups = pytest.importorskip("erlmix._speedups")


def random_tables_config(rng):
    n = int(rng.integers(1, 40))
    y = np.exp(rng.uniform(-3, 6, n))
    nu = (rng.random(n) > 0.4).astype(np.int8)
    theta = float(np.exp(rng.uniform(-3, 3)))
    mmax = int(rng.integers(1, 800))
    return y, nu, mmax, theta


class TestTableAgreement:
    def test_logpdf_and_logsf_tables(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            y, nu, mmax, theta = random_tables_config(rng)
            for fn in ("logpdf_table", "logsf_table"):
                a = getattr(_pykernels, fn)(y, mmax, theta)
                b = getattr(speedups, fn)(y, mmax, theta)
                scale = np.maximum(np.abs(a), 1.0)
                assert np.max(np.abs(a - b) / scale) < 1e-11

    def test_kernel_table_large_shapes(self):
        y = np.array([0.5, 250.0, 5000.0])
        nu = np.array([1, 0, 1], dtype=np.int8)
        a = _pykernels.log_kernel_table(y, nu, 20_000, 0.5)
        b = speedups.log_kernel_table(y, nu, 20_000, 0.5)
        scale = np.maximum(np.abs(a), 1.0)
        assert np.max(np.abs(a - b) / scale) < 1e-10
        assert np.all(np.isfinite(a))


def setup_dp_sweep(rng, n=25, M=18, theta=0.7, alpha=2.0, zeta=1.5):
    y = np.exp(rng.uniform(-1, 2.5, n))
    nu = (rng.random(n) > 0.3).astype(np.int8)
    phi = np.exp(rng.uniform(-1, 2.5, n))
    phi[rng.random(n) < 0.4] = phi[0]  # force shared atoms
    table = _pykernels.log_kernel_table(y, nu, M, theta)
    log_g = exp_bin_log_masses(M, theta, zeta)
    terms = log_g[None, :] + table[:, :M]
    mx = terms.max(axis=1)
    log_q0 = mx + np.log(np.exp(terms - mx[:, None]).sum(axis=1))
    atoms_u, inverse, counts_u = np.unique(phi, return_inverse=True, return_counts=True)
    k = atoms_u.shape[0]
    atoms = np.zeros(n)
    abins = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    atoms[:k] = atoms_u
    abins[:k] = latent_components(atoms_u, M, theta)
    counts[:k] = counts_u
    labels = inverse.astype(np.int64)
    uniforms = rng.random(3 * n)
    return dict(table=table, log_g=log_g, log_q0=log_q0, phi=phi, labels=labels,
                atoms=atoms, abins=abins, counts=counts, k=k, alpha=alpha,
                zeta=zeta, theta=theta, M=M, uniforms=uniforms)


def run_dp_sweep(impl, cfg):
    phi = cfg["phi"].copy()
    labels = cfg["labels"].copy()
    atoms = cfg["atoms"].copy()
    abins = cfg["abins"].copy()
    counts = cfg["counts"].copy()
    k = impl.dp_phi_sweep(cfg["table"], cfg["log_g"], cfg["log_q0"], phi, labels,
                          atoms, abins, counts, cfg["k"], cfg["alpha"], cfg["zeta"],
                          cfg["theta"], cfg["M"], cfg["uniforms"])
    return phi, labels, atoms[:k], abins[:k], counts[:k], k


class TestDpSweepAgreement:
    def test_identical_decisions_and_values(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            cfg = setup_dp_sweep(np.random.default_rng(100 + trial))
            pa = run_dp_sweep(_pykernels, cfg)
            pb = run_dp_sweep(speedups, cfg)
            assert pa[5] == pb[5], "cluster counts differ"
            assert np.array_equal(pa[1], pb[1]), "labels differ"
            assert np.array_equal(pa[3], pb[3]), "atom bins differ"
            assert np.array_equal(pa[4], pb[4]), "counts differ"
            np.testing.assert_allclose(pa[0], pb[0], rtol=1e-9)
            np.testing.assert_allclose(pa[2], pb[2], rtol=1e-9)

    def test_bookkeeping_invariants_after_sweep(self):
        cfg = setup_dp_sweep(np.random.default_rng(200))
        phi, labels, atoms, abins, counts, k = run_dp_sweep(speedups, cfg)
        assert counts.sum() == phi.shape[0]
        assert np.all(counts >= 1)
        assert np.all((labels >= 0) & (labels < k))
        for j in range(k):
            assert abins[j] == latent_components(atoms[j:j + 1], cfg["M"], cfg["theta"])[0]
        for i, lab in enumerate(labels):
            assert phi[i] == atoms[lab]


def setup_ddp_sweep(rng, n=24, M_C=15, M_T=12, theta_C=0.7, theta_T=0.9, alpha=3.0):
    y = np.exp(rng.uniform(-1, 2.5, n))
    nu = (rng.random(n) > 0.3).astype(np.int8)
    group = (rng.random(n) > 0.5).astype(np.int8)
    n_C = int((group == 0).sum())
    row_of = np.empty(n, dtype=np.int64)
    row_of[group == 0] = np.arange(n_C)
    row_of[group == 1] = np.arange(n - n_C)
    mu = np.array([0.4, 0.8])
    Sigma = np.array([[1.0, 0.3], [0.3, 0.9]])
    phi = np.exp(rng.uniform(-1, 2.5, (n, 2)))
    shared = rng.random(n) < 0.3
    phi[shared] = phi[0]
    tableC = _pykernels.log_kernel_table(y[group == 0], nu[group == 0], M_C, theta_C)
    tableT = _pykernels.log_kernel_table(y[group == 1], nu[group == 1], M_T, theta_T)
    from erlmix.ddp import lognormal_bin_log_masses_matrix

    s11, s12, s22 = Sigma[0, 0], Sigma[0, 1], Sigma[1, 1]
    log_q0 = np.empty(n)
    for g, mask, table, M, theta, sig in (
        (0, group == 0, tableC, M_C, theta_C, math.sqrt(s11 - s12 ** 2 / s22)),
        (1, group == 1, tableT, M_T, theta_T, math.sqrt(s22 - s12 ** 2 / s11)),
    ):
        oth = 1 - g
        var_oth = (s11, s22)[oth]
        mu_cond = mu[g] + (s12 / var_oth) * (np.log(phi[mask, oth]) - mu[oth])
        masses = lognormal_bin_log_masses_matrix(M, theta, mu_cond, sig)
        terms = masses + table[:, :M]
        mx = terms.max(axis=1)
        log_q0[mask] = mx + np.log(np.exp(terms - mx[:, None]).sum(axis=1))
    pairs, inverse, counts_u = np.unique(phi, axis=0, return_inverse=True, return_counts=True)
    k = pairs.shape[0]
    atomsC = np.zeros(n)
    atomsT = np.zeros(n)
    abinsC = np.zeros(n, dtype=np.int64)
    abinsT = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    atomsC[:k] = pairs[:, 0]
    atomsT[:k] = pairs[:, 1]
    abinsC[:k] = latent_components(pairs[:, 0], M_C, theta_C)
    abinsT[:k] = latent_components(pairs[:, 1], M_T, theta_T)
    counts[:k] = counts_u
    labels = inverse.reshape(-1).astype(np.int64)
    uniforms = rng.random(4 * n)
    return dict(tableC=tableC, tableT=tableT, row_of=row_of, group=group, log_q0=log_q0,
                phiC=phi[:, 0].copy(), phiT=phi[:, 1].copy(), labels=labels,
                atomsC=atomsC, atomsT=atomsT, abinsC=abinsC, abinsT=abinsT,
                counts=counts, k=k, alpha=alpha, mu=mu, Sigma=Sigma,
                theta_C=theta_C, theta_T=theta_T, M_C=M_C, M_T=M_T, uniforms=uniforms)


def run_ddp_sweep(impl, cfg):
    arrs = {name: cfg[name].copy() for name in
            ("phiC", "phiT", "labels", "atomsC", "atomsT", "abinsC", "abinsT", "counts")}
    k = impl.ddp_phi_sweep(cfg["tableC"], cfg["tableT"], cfg["row_of"], cfg["group"],
                           cfg["log_q0"], arrs["phiC"], arrs["phiT"], arrs["labels"],
                           arrs["atomsC"], arrs["atomsT"], arrs["abinsC"], arrs["abinsT"],
                           arrs["counts"], cfg["k"], cfg["alpha"], cfg["mu"], cfg["Sigma"],
                           cfg["theta_C"], cfg["theta_T"], cfg["M_C"], cfg["M_T"],
                           cfg["uniforms"])
    return arrs, k


class TestDdpSweepAgreement:
    def test_identical_decisions_and_values(self):
        for trial in range(10):
            cfg = setup_ddp_sweep(np.random.default_rng(300 + trial))
            arrs_a, ka = run_ddp_sweep(_pykernels, cfg)
            arrs_b, kb = run_ddp_sweep(speedups, cfg)
            assert ka == kb
            assert np.array_equal(arrs_a["labels"], arrs_b["labels"])
            assert np.array_equal(arrs_a["counts"][:ka], arrs_b["counts"][:ka])
            for name in ("phiC", "phiT"):
                np.testing.assert_allclose(arrs_a[name], arrs_b[name], rtol=1e-9)

    def test_bookkeeping_invariants_after_sweep(self):
        cfg = setup_ddp_sweep(np.random.default_rng(400))
        arrs, k = run_ddp_sweep(speedups, cfg)
        assert arrs["counts"][:k].sum() == cfg["phiC"].shape[0]
        for j in range(k):
            assert arrs["abinsC"][j] == latent_components(
                arrs["atomsC"][j:j + 1], cfg["M_C"], cfg["theta_C"])[0]
            assert arrs["abinsT"][j] == latent_components(
                arrs["atomsT"][j:j + 1], cfg["M_T"], cfg["theta_T"])[0]


def test_forced_pure_python_backend():
    env = dict(os.environ, ERLMIX_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import erlmix; print(erlmix.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "python"


def test_default_backend_is_compiled():
    assert __import__("erlmix").BACKEND == "cython"
