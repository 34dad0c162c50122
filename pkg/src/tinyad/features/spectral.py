"""Radix-2 FFT, one-sided periodogram and four spectral-shape features."""

from dataclasses import dataclass

import numpy as np

from tinyad.errors import SilentWindowError, WindowError

FREQ_FEATURES = ("sp", "mpf", "sskew", "skurt")
GUARD = 1e-12


def next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


def fft_radix2(x):
    """Iterative decimation-in-time FFT. ``len(x)`` must be a power of two."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    if n == 0 or n & (n - 1):
        raise ValueError(f"radix-2 FFT needs a power-of-two length, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[rev].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(-1, size)
        even = a[:, :half].copy()
        odd = a[:, half:] * tw
        a[:, :half] = even + odd
        a[:, half:] = even - odd
        a = a.reshape(-1)
        size *= 2
    return a


@dataclass(frozen=True)
class Periodogram:
    freqs: np.ndarray
    power: np.ndarray
    n_samples: int
    n_fft: int
    sample_rate: float = 1.0

    @property
    def recipe(self):
        return {"n_samples": self.n_samples, "n_fft": self.n_fft, "zero_padded": self.n_fft - self.n_samples,
                "normalisation": "|X|^2 / n_fft", "freq_unit": "cycles/sample" if self.sample_rate == 1.0 else "Hz"}

    def __iter__(self):
        return iter(zip(self.freqs.tolist(), self.power.tolist()))

    def __len__(self):
        return self.freqs.size


def psd(z, sample_rate=1.0):
    """One-sided periodogram ``S(f_i) = |X_i|^2 / n`` on the zero-padded power-of-two length."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size < 2:
        raise WindowError(f"periodogram needs at least 2 samples, got {z.size}")
    n = next_pow2(z.size)
    padded = np.zeros(n)
    padded[:z.size] = z
    spectrum = fft_radix2(padded)
    keep = n // 2 + 1
    power = np.abs(spectrum[:keep]) ** 2 / n
    freqs = np.arange(keep) / n * sample_rate
    return Periodogram(freqs, power, z.size, n, sample_rate)


@dataclass(frozen=True)
class FreqFeatures:
    sp: float
    mpf: float
    sskew: float
    skurt: float
    guarded: tuple = ()

    def values(self):
        return np.array([self.sp, self.mpf, self.sskew, self.skurt], dtype=np.float64)


def freq_features(spec, mpf_variant="scaled"):
    """Spectral power, mean power frequency, spectral skewness and kurtosis.

    ``spec`` is a :class:`Periodogram` or a sequence of ``(f, S)`` pairs.
    ``mpf_variant="scaled"`` keeps the leading ``1/k`` factor; ``"standard"``
    returns the plain power-weighted mean frequency.
    """
    if isinstance(spec, Periodogram):
        f, s = spec.freqs, spec.power
    else:
        pairs = np.asarray(list(spec), dtype=np.float64).reshape(-1, 2)
        f, s = pairs[:, 0], pairs[:, 1]
    if f.size == 0:
        raise WindowError("empty spectrum")
    total = s.sum()
    if total <= 0:
        raise SilentWindowError("spectrum has zero total power")
    k = f.size
    weights = s / total
    fbar = np.sum(f * weights)
    sigma = np.sqrt(np.sum((f - fbar) ** 2 * weights))
    sp = np.sum(f ** 3 * s)
    mean_freq = np.sum(f * s) / total
    mpf = mean_freq / k if mpf_variant == "scaled" else mean_freq
    guarded = []
    if sigma < GUARD:
        guarded = ["sskew", "skurt"]
        sskew = skurt = 0.0
    else:
        u = (f - fbar) / sigma
        sskew = np.sum(u ** 3 * s)
        skurt = np.sum(u ** 4 * s)
    return FreqFeatures(float(sp), float(mpf), float(sskew), float(skurt), tuple(guarded))
