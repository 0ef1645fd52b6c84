"""Convergence diagnostics: split R-hat and bulk effective sample size.

Both accept either a ``(chains, draws)`` array or a
:class:`~regret_clarify.inference.PosteriorSamples` plus a parameter name.
Degenerate (zero-variance) input yields ``nan`` together with a
:class:`DegenerateDiagnosticWarning`, never a silent 1.0.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

__all__ = [
    "DegenerateDiagnosticWarning",
    "split_r_hat",
    "effective_sample_size",
    "mcse_mean",
]


class DegenerateDiagnosticWarning(RuntimeWarning):
    """A diagnostic could not be computed because the draws have no variance."""


def _chains(samples, parameter=None) -> np.ndarray:
    if hasattr(samples, "param"):
        if parameter is None:
            raise ValueError("parameter name required for PosteriorSamples")
        x = samples.param(parameter)
    else:
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"expected (chains, draws) array, got shape {x.shape}")
    if x.shape[1] < 4:
        raise ValueError("at least 4 draws per chain are required")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    n = x.shape[1] // 2
    # middle draw dropped for odd lengths
    return np.concatenate([x[:, :n], x[:, -n:]], axis=0)


def _degenerate(name: str) -> float:
    warnings.warn(
        f"{name} undefined: draws have zero within-chain variance",
        DegenerateDiagnosticWarning,
        stacklevel=3,
    )
    return float("nan")


def split_r_hat(samples, parameter=None) -> float:
    """Potential scale reduction on half-split chains (no rank transform)."""
    x = _split(_chains(samples, parameter))
    n = x.shape[1]
    within = x.var(axis=1, ddof=1).mean()
    if not within > 0:
        return _degenerate("R-hat")
    between = n * x.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via FFT."""
    n = x.shape[1]
    centred = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, size, axis=1)
    return np.fft.irfft(f * np.conjugate(f), size, axis=1)[:, :n] / n


def _ess_raw(x: np.ndarray) -> float:
    m, n = x.shape
    acov = _autocov(x)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")

    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    # Geyer's initial positive sequence on pairs
    t = 1
    while t < n - 2 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = max(t - 2, 0)
    if max_t + 1 < n and rho[max_t + 1] > 0:
        max_t += 1
    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        prev = rho[t - 1] + rho[t]
        if rho[t + 1] + rho[t + 2] > prev:
            rho[t + 1] = prev / 2.0
            rho[t + 2] = prev / 2.0
        t += 2

    total = m * n
    tail = rho[max_t + 1] if max_t + 1 < n else 0.0
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + tail
    tau = max(tau, 1.0 / np.log10(total)) if total > 1 else max(tau, 1.0)
    return float(total / tau)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    ranks = rankdata(x, method="average").reshape(x.shape)
    return ndtri((ranks - 0.375) / (x.size + 0.25))


def effective_sample_size(samples, parameter=None) -> float:
    """Bulk ESS over all chains: rank-normalised split chains, Geyer truncation."""
    x = _split(_chains(samples, parameter))
    if not x.var(axis=1, ddof=1).mean() > 0:
        return _degenerate("ESS")
    return _ess_raw(_rank_normalize(x))


def mcse_mean(samples, parameter=None) -> float:
    """Monte Carlo standard error of the posterior mean."""
    x = _chains(samples, parameter)
    ess = _ess_raw(_split(x))
    return float(x.std(ddof=1) / np.sqrt(ess))
