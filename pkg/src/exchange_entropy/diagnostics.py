"""Monte Carlo error estimates for correlated sample series."""

from __future__ import annotations

import numpy as np


def autocorrelation_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return 1.0
    y = x - x.mean()
    var = np.dot(y, y) / n
    if var == 0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n] / (n * var)
    tau = 1.0
    for m in range(1, n):
        tau += 2.0 * acf[m]
        if m >= c * tau:
            break
    return max(tau, 1.0)


def effective_sample_size(x) -> float:
    x = np.asarray(x, dtype=float)
    return len(x) / autocorrelation_time(x)


def batch_means_stderr(x, n_batches: int = 50) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    n_batches = min(n_batches, n)
    if n_batches < 2:
        raise ValueError("need at least two samples for a standard error")
    size = n // n_batches
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))
