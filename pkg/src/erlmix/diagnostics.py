"""Chain diagnostics: effective sample size via Geyer's initial monotone
sequence estimator."""

from __future__ import annotations

import numpy as np


def ess_imse(x) -> float:
    """Effective sample size of a scalar trace.

    Autocorrelations are paired into Gamma_k = rho_{2k} + rho_{2k+1}; the sum
    is truncated at the first nonpositive pair and forced non-increasing, and
    the integrated autocorrelation time is tau = 2 sum Gamma_k - 1.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    xc = x - x.mean()
    var = np.dot(xc, xc) / n
    if var == 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    rho = acov / acov[0]
    gammas = []
    for k in range(n // 2):
        g = rho[2 * k] + (rho[2 * k + 1] if 2 * k + 1 < n else 0.0)
        if g <= 0.0:
            break
        if gammas and g > gammas[-1]:
            g = gammas[-1]
        gammas.append(g)
    tau = max(2.0 * sum(gammas) - 1.0, 1e-8)
    return float(n / tau)
