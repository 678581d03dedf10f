"""Chain diagnostics: autocorrelation-based effective sample size."""

from __future__ import annotations

import numpy as np


def autocorrelation(chain: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation of each column of ``chain`` via FFT.

    Constant columns get a correlation of 1 at every lag.
    """
    x = np.asarray(chain, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    x = x - x.mean(axis=0)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, n=size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=0)[:n]
    var = acov[0].copy()
    flat = var <= 1e-300
    var[flat] = 1.0
    rho = acov / var
    rho[:, flat] = 1.0
    return rho


def effective_sample_size(chain: np.ndarray, block: int = 2048) -> np.ndarray:
    """Per-column ESS with Geyer's initial monotone sequence estimator.

    ``chain`` has shape ``(draws,)`` or ``(draws, dims)``.  A constant column
    carries one effective draw.
    """
    x = np.asarray(chain, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n, d = x.shape
    if n < 4:
        out = np.full(d, float(n))
        return out[0] if squeeze else out
    out = np.empty(d)
    for start in range(0, d, block):
        cols = slice(start, min(d, start + block))
        rho = autocorrelation(x[:, cols])
        flat = np.all(rho == 1.0, axis=0)
        m = (n // 2) * 2
        pairs = rho[0:m:2] + rho[1:m:2]
        positive = np.cumprod(pairs > 0, axis=0).astype(bool)
        pairs = np.where(positive, pairs, 0.0)
        pairs = np.minimum.accumulate(np.where(positive, pairs, np.inf), axis=0)
        pairs = np.where(positive, pairs, 0.0)
        tau = -1.0 + 2.0 * pairs.sum(axis=0)
        tau = np.maximum(tau, 1.0 / np.log10(max(n, 10)))
        ess = n / tau
        ess[flat] = 1.0
        out[cols] = ess
    return out[0] if squeeze else out
