"""Effective sample size, split R-hat and per-chain reports."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Sample autocorrelation of a 1-d series via FFT (lag 0 first)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial monotone positive-sequence truncation.

    Returns ``nan`` for a constant series.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise InvalidArgument("effective sample size needs at least 4 draws")
    if np.ptp(x) == 0:
        return float("nan")
    rho = autocorrelation(x)
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}
    m = (n - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    positive = np.flatnonzero(pairs <= 0)
    stop = positive[0] if positive.size else pairs.size
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * float(np.sum(pairs))
    tau = max(tau, 1.0 / np.log10(max(n, 10)))
    return float(n / tau)


def mcse_mean(x) -> float:
    """Monte Carlo standard error of the sample mean."""
    x = np.asarray(x, dtype=float)
    ess = effective_sample_size(x)
    if not np.isfinite(ess):
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(ess))


def split_rhat(chains) -> float:
    """Split potential scale reduction factor over an (M, S) array of chains."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    S = chains.shape[1]
    half = S // 2
    if half < 2:
        raise InvalidArgument("split R-hat needs at least 4 draws per chain")
    parts = np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)
    n = parts.shape[1]
    W = np.mean(np.var(parts, axis=1, ddof=1))
    B = n * np.var(np.mean(parts, axis=1), ddof=1)
    if W == 0:
        return float("nan")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def chain_diagnostics(chain, columns=None) -> dict:
    """ESS per parameter, acceptance per block and the exponent clamp count.

    Parameters whose draws never change are listed under ``degenerate``.
    """
    if chain.S < 10:
        raise InvalidArgument(f"diagnostics need at least 10 draws, got {chain.S}")
    names = chain.names
    if columns is None:
        columns = range(len(names))
    else:
        columns = [names.index(c) if isinstance(c, str) else c for c in columns]
    ess, degenerate = {}, []
    for j in columns:
        value = effective_sample_size(chain.draws[:, j])
        ess[names[j]] = value
        if not np.isfinite(value):
            degenerate.append(names[j])
    return {
        "draws": chain.S,
        "ess": ess,
        "degenerate": degenerate,
        "acceptance": dict(chain.acceptance),
        "clamp_count": chain.clamp_count,
    }
