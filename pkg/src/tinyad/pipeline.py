"""Prediction-based anomaly detection: ingestion, scoring, thresholding, evaluation."""

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from tinyad.errors import IngestionError, ShapeError
from tinyad.features.matrix import build_feature_matrix
from tinyad.scheduler.executor import ExecMode, execute
from tinyad.tensor import Tensor

log = logging.getLogger(__name__)

SPLIT = (6, 1, 3)  # train / validation / test, in tenths


@dataclass
class SeriesDataset:
    timestamps: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    train_end: int
    val_end: int

    def __len__(self):
        return self.values.size

    @property
    def segments(self):
        n = len(self)
        return {"train": (0, self.train_end), "validation": (self.train_end, self.val_end), "test": (self.val_end, n)}

    @property
    def split_sizes(self):
        return tuple(hi - lo for lo, hi in self.segments.values())


def chronological_split(n):
    train_end = n * SPLIT[0] // 10
    val_end = n * (SPLIT[0] + SPLIT[1]) // 10
    return train_end, val_end


def from_arrays(values, labels=None, timestamps=None):
    values = np.asarray(values, dtype=np.float64)
    labels = np.zeros(values.size, dtype=np.int8) if labels is None else np.asarray(labels, dtype=np.int8)
    timestamps = np.arange(values.size, dtype=np.float64) if timestamps is None else np.asarray(timestamps)
    return SeriesDataset(timestamps, values, labels, *chronological_split(values.size))


def _timestamp(text, row):
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(text.strip()).timestamp()
    except ValueError:
        raise IngestionError(f"unparseable timestamp {text!r}", row) from None


def load_csv(path):
    """Read a ``timestamp,value,label`` CSV. Row numbers in errors count the header as row 1."""
    ts, vals, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestionError("empty file")
        if [h.strip().lower() for h in header] != ["timestamp", "value", "label"]:
            raise IngestionError(f"expected header timestamp,value,label, got {','.join(header)}", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise IngestionError(f"expected 3 columns, got {len(row)}", row_no)
            t = _timestamp(row[0], row_no)
            if ts and t <= ts[-1]:
                raise IngestionError(f"timestamp {row[0]} does not increase", row_no)
            try:
                v = float(row[1])
            except ValueError:
                raise IngestionError(f"bad value {row[1]!r}", row_no) from None
            if not np.isfinite(v):
                raise IngestionError(f"non-finite value {row[1]!r}", row_no)
            if row[2].strip() not in ("0", "1"):
                raise IngestionError(f"label must be 0 or 1, got {row[2]!r}", row_no)
            ts.append(t)
            vals.append(v)
            labels.append(int(row[2]))
    if not vals:
        raise IngestionError("file has no data rows")
    return from_arrays(vals, labels, ts)


def write_csv(path, dataset):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "value", "label"])
        for t, v, y in zip(dataset.timestamps, dataset.values, dataset.labels):
            w.writerow([repr(float(t)), repr(float(v)), int(y)])


@dataclass(frozen=True)
class FeatureGeometry:
    subwindow: int
    stride: int
    domains: tuple = ("time", "freq", "wavelet")


def _window_input(model, samples, geometry):
    shape = model.input_shape
    if geometry is None:
        if shape.as_list() != [1, samples.size]:
            raise ShapeError(f"model input {shape} does not match raw window [1,{samples.size}]")
        return Tensor(shape, samples.astype(np.float32))
    fm = build_feature_matrix(samples, samples.size, geometry.subwindow, geometry.stride, geometry.domains)
    if shape.as_list() != [1, *fm.values.shape]:
        raise ShapeError(f"model input {shape} does not match feature matrix [1,{fm.values.shape[0]},"
                         f"{fm.values.shape[1]}]")
    return Tensor(shape, fm.values.astype(np.float32))


def predict_series(model, dataset, mode="naive", window=None, geometry=None, error="abs", workers=None):
    """One-step-ahead anomaly scores; entries before the first full window are NaN.

    For each t >= window the model sees samples ``[t - window, t)`` and predicts
    sample t. ``error`` is ``"abs"`` or ``"squared"``.
    """
    if isinstance(mode, str):
        mode = ExecMode.parse(mode)
    values = dataset.values if isinstance(dataset, SeriesDataset) else np.asarray(dataset, dtype=np.float64)
    if window is None:
        window = model.input_shape.spatial[-1] if geometry is None else None
    if window is None:
        raise ShapeError("window length is required for feature-matrix input")
    if values.size <= window:
        raise ShapeError(f"series of {values.size} samples is not longer than window {window}")
    _window_input(model, values[:window], geometry)  # geometry check up front

    def score(t):
        out = execute(model, _window_input(model, values[t - window:t], geometry), mode).output
        pred = float(out.array.ravel()[0])
        diff = pred - values[t]
        return abs(diff) if error == "abs" else diff * diff

    ts = range(window, values.size)
    workers = _workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            computed = list(pool.map(score, ts))
    else:
        computed = [score(t) for t in ts]
    scores = np.full(values.size, np.nan)
    scores[window:] = computed
    return scores


def _workers(requested):
    cap = os.environ.get("TINYAD_THREADS")
    n = requested if requested is not None else 1
    if cap:
        n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
    return max(1, n)


def confusion(pred, labels):
    pred = np.asarray(pred, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    tn = int(np.sum(~pred & ~labels))
    return tp, fp, fn, tn


def prf(pred, labels):
    tp, fp, fn, _ = confusion(pred, labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def threshold_candidates(scores):
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2
    return np.concatenate([[-np.inf], mids, [np.inf]])


def select_threshold(scores, labels):
    """Threshold maximising validation F1; ties go to the larger threshold.

    Candidates are the midpoints of sorted unique scores plus both infinities.
    F1 is compared as the exact ratio 2tp / (tp + fp + positives), so
    mathematically tied candidates really tie.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    keep = ~np.isnan(scores)
    scores, labels = scores[keep], labels[keep] == 1
    if scores.size == 0:
        raise ShapeError("validation segment has no scores")
    if not np.any(labels):
        log.warning("no labelled anomalies in validation; using the alarm-free threshold")
        return float(scores.max())
    cands = threshold_candidates(scores)
    u = np.unique(scores)
    # alarms at candidate j are the scores >= u[j] (j = 0 is -inf, the last is +inf)
    first = np.searchsorted(u, scores)
    pos_at = np.bincount(first, weights=labels, minlength=u.size + 1)
    all_at = np.bincount(first, minlength=u.size + 1)
    tp = np.cumsum(pos_at[::-1])[::-1].astype(np.int64)
    alarms = np.cumsum(all_at[::-1])[::-1].astype(np.int64)
    total_pos = int(labels.sum())
    num = 2 * tp
    den = alarms + total_pos
    best = int(np.argmax(num / den))
    exact = np.flatnonzero(num * den[best] == num[best] * den)
    return float(cands[exact.max()])


@dataclass
class DetectionResult:
    scores: np.ndarray
    threshold: float
    predicted: np.ndarray
    precision: float
    recall: float
    f1: float

    def summary(self):
        return {"threshold": self.threshold, "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "n_points": int(self.scores.size), "n_alarms": int(self.predicted.sum())}


def evaluate(scores, labels, threshold):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    keep = ~np.isnan(scores)
    scores, labels = scores[keep], labels[keep]
    if scores.size == 0:
        raise ShapeError("test segment has no scores")
    pred = scores > threshold
    p, r, f1 = prf(pred, labels == 1)
    return DetectionResult(scores, float(threshold), pred.astype(np.int8), p, r, f1)


def detect(model, dataset, mode="naive", window=None, geometry=None, error="abs", workers=None):
    """Score the series, pick the threshold on validation, evaluate on test."""
    scores = predict_series(model, dataset, mode, window, geometry, error, workers)
    seg = dataset.segments
    v0, v1 = seg["validation"]
    t0, t1 = seg["test"]
    tau = select_threshold(scores[v0:v1], dataset.labels[v0:v1])
    return scores, evaluate(scores[t0:t1], dataset.labels[t0:t1], tau)


def synthetic_series(n, seed=0, period=50, noise=0.05, anomaly_rate=0.01, magnitude=3.0):
    """Noisy periodic series with labelled point spikes."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    values = np.sin(2 * np.pi * t / period) + 0.5 * np.sin(2 * np.pi * t / (period * 7.3))
    values += noise * rng.standard_normal(n)
    labels = (rng.random(n) < anomaly_rate).astype(np.int8)
    values[labels == 1] += magnitude * rng.choice([-1.0, 1.0], size=int(labels.sum()))
    return from_arrays(values, labels, t.astype(np.float64))
