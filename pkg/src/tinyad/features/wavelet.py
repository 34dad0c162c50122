"""Periodized Mallat DWT with Daubechies 1 and 2 and per-level detail energy."""

from dataclasses import dataclass

import numpy as np

from tinyad.errors import WindowError

_S3 = np.sqrt(3.0)

LOWPASS = {
    "db1": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * np.sqrt(2.0)),
}


def filters(wavelet):
    try:
        h = LOWPASS[wavelet]
    except KeyError:
        raise ValueError(f"unsupported wavelet {wavelet!r}; expected db1 or db2") from None
    g = h[::-1] * (-1.0) ** np.arange(h.size)
    return h, g


def dwt_step(x, wavelet):
    """One analysis step with periodic extension; ``len(x)`` must be even."""
    h, g = filters(wavelet)
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :]) % n
    taps = x[idx]
    return taps @ h, taps @ g


def wavedec(z, wavelet, levels):
    """Approximation at the deepest level plus details for levels 1..levels.

    The window is zero-padded to a multiple of ``2**levels``; padding adds no energy.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size < 2 ** levels:
        raise WindowError(f"window of {z.size} samples too short for {levels} levels")
    block = 2 ** levels
    n = -(-z.size // block) * block
    a = np.zeros(n)
    a[:z.size] = z
    details = []
    for _ in range(levels):
        a, d = dwt_step(a, wavelet)
        details.append(d)
    return a, details


@dataclass(frozen=True)
class WaveletFeatures:
    wavelet: str
    energies: tuple
    approx_energy: float

    def values(self):
        return np.array(self.energies, dtype=np.float64)


def dwt_energy(z, wavelet, levels=3):
    """Detail energy ``sum(d_j**2) / N`` per level, N the original window length."""
    z = np.asarray(z, dtype=np.float64).ravel()
    approx, details = wavedec(z, wavelet, levels)
    n = z.size
    energies = tuple(float(np.sum(d * d) / n) for d in details)
    return WaveletFeatures(wavelet, energies, float(np.sum(approx * approx) / n))
