"""Twelve handcrafted time-domain statistics of a window."""

from dataclasses import astuple, dataclass

import numpy as np

from tinyad.errors import WindowError

GUARD = 1e-12

TIME_FEATURES = ("min", "mean", "rms", "var", "std", "peak", "p2p", "crest", "skew", "kurt", "form", "pulse")


@dataclass(frozen=True)
class TimeFeatures:
    min: float
    mean: float
    rms: float
    var: float
    std: float
    peak: float
    p2p: float
    crest: float
    skew: float
    kurt: float
    form: float
    pulse: float
    guarded: tuple = ()

    def values(self):
        return np.array(astuple(self)[:len(TIME_FEATURES)], dtype=np.float64)


def _ratio(num, den, name, guarded):
    if abs(den) < GUARD:
        guarded.append(name)
        return 0.0
    return float(num / den)


def time_features(z):
    z = np.asarray(z, dtype=np.float64).ravel()
    n = z.size
    if n < 2:
        raise WindowError(f"time features need at least 2 samples, got {n}")
    guarded = []
    mu = z.mean()
    rms = np.sqrt(np.mean(z * z))
    dev = z - mu
    var = np.sum(dev * dev) / (n - 1)
    std = np.sqrt(var)
    peak = np.max(np.abs(z))
    skew = _ratio(np.mean(dev ** 3), std ** 3, "skew", guarded)
    kurt = _ratio(np.mean(dev ** 4), std ** 4, "kurt", guarded)
    return TimeFeatures(
        min=float(z.min()),
        mean=float(mu),
        rms=float(rms),
        var=float(var),
        std=float(std),
        peak=float(peak),
        p2p=float(z.max() - z.min()),
        crest=_ratio(peak, rms, "crest", guarded),
        skew=skew,
        kurt=kurt,
        form=_ratio(rms, mu, "form", guarded),
        pulse=_ratio(peak, mu, "pulse", guarded),
        guarded=tuple(guarded),
    )

