"""Model builders and the dataset hyper-parameter configurations used as fixtures.

Weights are random (He-style scaling); these models exist to exercise
scheduling and accounting, not to detect anything.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from tinyad.modelio import Dense, DepthwiseConv, MaxPool, ModelSpec, PointwiseConv, RegularConv, Relu
from tinyad.tensor import Shape

TRI_DOMAIN_FEATURES = 22


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    kernel: tuple
    regular_filters: int
    depthwise_filters: int
    window: int
    # 2-D inputs are feature matrices: (subwindow, stride) of the sliding feature extractor
    subwindow: int = None
    feature_stride: int = None
    # pooling ahead of the dense layers, per spatial axis
    pool: tuple = None

    @property
    def rank(self):
        return len(self.kernel)

    @property
    def input_shape(self):
        if self.rank == 1:
            return Shape(1, (self.window,))
        cols = (self.window - self.subwindow) // self.feature_stride + 1
        return Shape(1, (TRI_DOMAIN_FEATURES, cols))


DATASET_CONFIGS = (
    DatasetConfig("Yahoo", (4, 4), 32, 32, 200, subwindow=20, feature_stride=3, pool=(16, 11)),
    DatasetConfig("SWaT(1)", (5, 5), 64, 64, 1200, subwindow=40, feature_stride=8, pool=(14, 23)),
    DatasetConfig("SWaT(2)", (3,), 32, 64, 1200, pool=(92,)),
    DatasetConfig("SWaT(3)", (3,), 64, 128, 1200, pool=(92,)),
    DatasetConfig("SKAB", (3,), 16, 32, 1200, pool=(92,)),
)


def config(name):
    for c in DATASET_CONFIGS:
        if c.name.lower() == name.lower():
            return c
    raise KeyError(name)


def _w(rng, n, fan_in):
    return (rng.standard_normal(n) * np.sqrt(2.0 / max(fan_in, 1))).astype(np.float32)


def _b(rng, n):
    return (rng.standard_normal(n) * 0.1).astype(np.float32)


def regular_conv(rng, n_i, n_o, kernel, stride=1):
    kernel = tuple(kernel)
    return RegularConv(kernel, n_o, _w(rng, n_o * n_i * prod(kernel), n_i * prod(kernel)), _b(rng, n_o), stride)


def depthwise_conv(rng, n_i, multiplier, kernel, stride=1):
    kernel = tuple(kernel)
    n = n_i * multiplier
    return DepthwiseConv(kernel, multiplier, _w(rng, n * prod(kernel), prod(kernel)), _b(rng, n), stride)


def pointwise_conv(rng, n_i, n_o):
    return PointwiseConv(n_o, _w(rng, n_o * n_i, n_i), _b(rng, n_o))


def dense(rng, n_in, units):
    return Dense(units, _w(rng, n_in * units, n_in), _b(rng, units))


def _with_shapes(input_shape, builders):
    """Build layers sequentially; each builder gets the current input shape."""
    layers = []
    shape = input_shape
    for build in builders:
        layer = build(shape)
        shape = layer.output_shape(shape)
        layers.append(layer)
    return ModelSpec(input_shape, layers)


def dw_cnn(cfg, multiplier=1, dense_units=16, seed=0):
    """Depthwise-separable model: conv, depthwise, pointwise, pool, two dense layers."""
    rng = np.random.default_rng(seed)
    k = cfg.kernel
    return _with_shapes(cfg.input_shape, [
        lambda s: regular_conv(rng, s.channels, cfg.regular_filters, k),
        lambda s: Relu(),
        lambda s: depthwise_conv(rng, s.channels, multiplier, k),
        lambda s: Relu(),
        lambda s: pointwise_conv(rng, s.channels, cfg.depthwise_filters),
        lambda s: Relu(),
        lambda s: MaxPool(cfg.pool),
        lambda s: dense(rng, s.element_count, dense_units),
        lambda s: Relu(),
        lambda s: dense(rng, s.units if hasattr(s, "units") else s.element_count, 1),
    ])


def rg_cnn(cfg, dense_units=16, seed=0):
    """Regular-convolution counterpart of :func:`dw_cnn` with the same output channels."""
    rng = np.random.default_rng(seed)
    k = cfg.kernel
    return _with_shapes(cfg.input_shape, [
        lambda s: regular_conv(rng, s.channels, cfg.regular_filters, k),
        lambda s: Relu(),
        lambda s: regular_conv(rng, s.channels, cfg.depthwise_filters, k),
        lambda s: Relu(),
        lambda s: MaxPool(cfg.pool),
        lambda s: dense(rng, s.element_count, dense_units),
        lambda s: Relu(),
        lambda s: dense(rng, s.element_count, 1),
    ])


def dw_trunk(cfg, multiplier=1, seed=0, length=None):
    """Conv trunk only: regular conv, depthwise conv, pointwise conv."""
    rng = np.random.default_rng(seed)
    k = cfg.kernel
    shape = cfg.input_shape if length is None else Shape(1, (length,))
    return _with_shapes(shape, [
        lambda s: regular_conv(rng, s.channels, cfg.regular_filters, k),
        lambda s: depthwise_conv(rng, s.channels, multiplier, k),
        lambda s: pointwise_conv(rng, s.channels, cfg.depthwise_filters),
    ])


def single_depthwise(channels, length, kernel=1, multiplier=1, seed=0):
    rng = np.random.default_rng(seed)
    return _with_shapes(Shape(channels, (length,)), [
        lambda s: depthwise_conv(rng, s.channels, multiplier, (kernel,)),
    ])


def random_model(rng, rank=None, max_length=1200, m=1):
    """Random 1-3 conv-layer model whose trunk output can be split ``m`` ways.

    Layers are drawn from regular, depthwise (K in {1, 2}) and pointwise
    convolutions with optional relu and max-pool, followed by an optional
    dense tail.
    """
    rank = rank if rank is not None else int(rng.integers(1, 3))
    while True:
        if rank == 1:
            spatial = (int(rng.integers(16, max_length + 1)),)
        else:
            spatial = (int(rng.integers(6, 23)), int(rng.integers(12, 81)))
        channels = int(rng.integers(1, 4))
        shape = Shape(channels, spatial)
        n_conv = int(rng.integers(1, 4))
        builders = []
        cur = shape
        ok = True
        for _ in range(n_conv):
            kind = rng.choice(["regular", "depthwise", "depthwise", "pointwise"])
            k = tuple(int(rng.integers(1, 6)) for _ in range(rank))
            stride = tuple(int(rng.choice([1, 1, 2])) for _ in range(rank))
            if any(kk > n for kk, n in zip(k, cur.spatial)):
                ok = False
                break
            if kind == "regular":
                layer = regular_conv(rng, cur.channels, int(rng.integers(1, 9)), k, stride)
            elif kind == "depthwise":
                layer = depthwise_conv(rng, cur.channels, int(rng.integers(1, 3)), k, stride)
            else:
                layer = pointwise_conv(rng, cur.channels, int(rng.integers(1, 9)))
            builders.append(layer)
            cur = layer.output_shape(cur)
            if rng.random() < 0.5:
                builders.append(Relu())
            if rng.random() < 0.2 and all(n >= 2 for n in cur.spatial):
                pool = MaxPool(tuple(2 for _ in range(rank)))
                builders.append(pool)
                cur = pool.output_shape(cur)
        if not ok or cur.spatial[-1] < m:
            continue
        if rng.random() < 0.6:
            units = int(rng.integers(1, 9))
            builders.append(dense(rng, cur.element_count, units))
            if rng.random() < 0.5:
                builders.append(Relu())
            builders.append(dense(rng, units, 1))
        return ModelSpec(shape, builders)
