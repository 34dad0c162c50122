"""Time, frequency and wavelet features of time-series windows."""

from tinyad.features.matrix import (
    DOMAIN_ORDER,
    FeatureMatrix,
    build_feature_matrix,
    feature_names,
    n_columns,
    window_features,
)
from tinyad.features.spectral import FreqFeatures, Periodogram, fft_radix2, freq_features, psd
from tinyad.features.timedomain import TimeFeatures, time_features
from tinyad.features.wavelet import WaveletFeatures, dwt_energy, wavedec

__all__ = [
    "DOMAIN_ORDER",
    "FeatureMatrix",
    "FreqFeatures",
    "Periodogram",
    "TimeFeatures",
    "WaveletFeatures",
    "build_feature_matrix",
    "dwt_energy",
    "feature_names",
    "fft_radix2",
    "freq_features",
    "n_columns",
    "psd",
    "time_features",
    "wavedec",
    "window_features",
]
