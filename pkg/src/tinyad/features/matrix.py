"""Sliding sub-window feature matrices for 2-D CNN input."""

from dataclasses import dataclass

import numpy as np

from tinyad.errors import SilentWindowError, WindowError
from tinyad.features.spectral import FREQ_FEATURES, freq_features, psd
from tinyad.features.timedomain import TIME_FEATURES, time_features
from tinyad.features.wavelet import dwt_energy

WAVELET_FEATURES = tuple(f"{w}_L{j}" for w in ("db1", "db2") for j in (1, 2, 3))
DOMAINS = {"time": TIME_FEATURES, "freq": FREQ_FEATURES, "wavelet": WAVELET_FEATURES}
DOMAIN_ORDER = ("time", "freq", "wavelet")
WAVELET_LEVELS = 3


def feature_names(domains=DOMAIN_ORDER):
    names = []
    for d in _ordered(domains):
        names.extend(DOMAINS[d])
    return names


def _ordered(domains):
    if isinstance(domains, str):
        domains = [d.strip() for d in domains.split(",") if d.strip()]
    if "tri" in domains:
        return list(DOMAIN_ORDER)
    unknown = set(domains) - set(DOMAINS)
    if unknown:
        raise ValueError(f"unknown feature domains {sorted(unknown)}")
    return [d for d in DOMAIN_ORDER if d in domains]


@dataclass
class FeatureMatrix:
    values: np.ndarray      # (features, columns)
    names: list
    window: int
    subwindow: int
    stride: int
    flags: np.ndarray       # (columns,) True where a guard value replaced a feature

    @property
    def columns(self):
        return self.values.shape[1]


def n_columns(window, subwindow, stride):
    return (window - subwindow) // stride + 1


def window_features(z, domains=DOMAIN_ORDER):
    """Feature vector for one sub-window plus a flag for guarded values."""
    parts = []
    flagged = False
    for d in _ordered(domains):
        if d == "time":
            tf = time_features(z)
            parts.append(tf.values())
            flagged |= bool(tf.guarded)
        elif d == "freq":
            try:
                ff = freq_features(psd(z))
                parts.append(ff.values())
                flagged |= bool(ff.guarded)
            except SilentWindowError:
                parts.append(np.zeros(len(FREQ_FEATURES)))
                flagged = True
        else:
            for w in ("db1", "db2"):
                parts.append(dwt_energy(z, w, WAVELET_LEVELS).values())
    return np.concatenate(parts), flagged


def build_feature_matrix(series, window=None, subwindow=40, stride=8, domains=DOMAIN_ORDER):
    """Feature matrix over the most recent ``window`` samples of ``series``.

    Column t summarises samples ``[t*stride, t*stride + subwindow)`` of the window,
    oldest first.
    """
    series = np.asarray(series, dtype=np.float64).ravel()
    window = series.size if window is None else window
    if window > series.size:
        raise WindowError(f"window {window} longer than series of {series.size} samples")
    if stride < 1:
        raise WindowError(f"stride must be >= 1, got {stride}")
    if not window >= subwindow >= 2 ** WAVELET_LEVELS:
        raise WindowError(f"need window >= subwindow >= {2 ** WAVELET_LEVELS}, got {window}, {subwindow}")
    z = series[series.size - window:]
    cols = n_columns(window, subwindow, stride)
    names = feature_names(domains)
    values = np.zeros((len(names), cols))
    flags = np.zeros(cols, dtype=bool)
    for t in range(cols):
        values[:, t], flags[t] = window_features(z[t * stride:t * stride + subwindow], domains)
    return FeatureMatrix(values, names, window, subwindow, stride, flags)
