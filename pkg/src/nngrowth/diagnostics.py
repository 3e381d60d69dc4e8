"""Convergence diagnostics for multi-chain output."""
from __future__ import annotations

import numpy as np


def psrf(chains) -> float:
    """Corrected potential scale reduction factor of Brooks and Gelman (1998).

    Parameters
    ----------
    chains : array_like, shape (n_chains, n_draws)
        One scalar series per chain.

    Returns
    -------
    float
        ``sqrt((d + 3) / (d + 1) * V / W)`` where ``V`` is the pooled
        posterior variance estimate, ``W`` the mean within-chain variance
        and ``d`` the method-of-moments degrees of freedom of ``V``.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError(f"need >= 2 chains of >= 2 draws, got shape {x.shape}")
    m, n = x.shape
    means = x.mean(axis=1)
    s2 = x.var(axis=1, ddof=1)
    W = s2.mean()
    if W <= 0:
        raise ValueError("degenerate quantity: zero within-chain variance")
    B = n * means.var(ddof=1)
    sigma2_hat = (n - 1) / n * W + B / n
    V = sigma2_hat + B / (m * n)
    grand = means.mean()
    cov_s2_mean2 = np.cov(s2, means ** 2, ddof=1)[0, 1]
    cov_s2_mean = np.cov(s2, means, ddof=1)[0, 1]
    var_V = (((n - 1) / n) ** 2 / m * s2.var(ddof=1)
             + ((m + 1) / (m * n)) ** 2 * 2.0 / (m - 1) * B ** 2
             + 2.0 * (m + 1) * (n - 1) / (m * n ** 2) * (n / m) * (cov_s2_mean2 - 2.0 * grand * cov_s2_mean))
    correction = 1.0 if var_V <= 0 else (lambda d: (d + 3) / (d + 1))(2.0 * V ** 2 / var_V)
    return float(np.sqrt(correction * V / W))


def gelman_rubin(samples, quantity) -> float:
    """R-hat of a scalar functional of the posterior draws.

    ``quantity`` is either an array of shape (n_chains, n_draws), a key into
    ``samples.draws`` naming a scalar unknown, or a callable taking one
    draw dict and returning a float.
    """
    if isinstance(quantity, str):
        series = samples.draws[quantity]
    elif callable(quantity):
        series = np.array([[quantity(samples.draw(c, s)) for s in range(samples.n_draws)]
                           for c in range(samples.n_chains)])
    else:
        series = quantity
    series = np.asarray(series, dtype=float)
    if series.shape[1] < 10:
        raise ValueError("need at least 10 draws per chain")
    return psrf(series)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag (FFT based, biased normalization)."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag:
        raise ValueError(f"series of length {n} too short for max_lag={max_lag}")
    x = x - x.mean()
    var = np.dot(x, x)
    if var == 0:
        raise ValueError("constant series has undefined autocorrelation")
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return acov / var


def effective_sample_size(series) -> float:
    """ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    rho = autocorrelation(x, n - 1)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def multichain_ess(chains) -> float:
    """Sum of per-chain effective sample sizes."""
    return float(sum(effective_sample_size(c) for c in np.asarray(chains, dtype=float)))
