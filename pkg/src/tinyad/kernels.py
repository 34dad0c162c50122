"""Convolution, pooling, dense and activation primitives.

Convolutions are valid (no padding) and run as im2col followed by a matrix
multiply. Accumulation happens in float64; results are rounded to float32.
Every function takes and returns ``(channels, *spatial)`` float32 arrays;
``Tensor`` wrappers live at the bottom of the module.
"""

from math import prod

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tinyad.errors import ShapeError
from tinyad.modelio import Dense, DepthwiseConv, MaxPool, PointwiseConv, RegularConv, Relu
from tinyad.tensor import Tensor


class MacCounter:
    def __init__(self):
        self.total = 0
        self.by_layer = {}

    def add(self, n, layer_index=None):
        self.total += int(n)
        if layer_index is not None:
            self.by_layer[layer_index] = self.by_layer.get(layer_index, 0) + int(n)


def _count(counter, n, layer_index):
    if counter is not None:
        counter.add(n, layer_index)


def _windows(x, kernel, stride):
    """Sliding windows of shape (C, *out, *kernel)."""
    spatial = x.shape[1:]
    if len(kernel) != len(spatial):
        raise ShapeError(f"kernel rank {len(kernel)} does not match input rank {len(spatial)}")
    for n, k in zip(spatial, kernel):
        if k > n:
            raise ShapeError(f"kernel extent {k} larger than input extent {n}")
    axes = tuple(range(1, 1 + len(spatial)))
    win = sliding_window_view(x, kernel, axis=axes)
    index = (slice(None),) + tuple(slice(None, None, s) for s in stride)
    return win[index]


def im2col(x, kernel, stride):
    """Rows = output positions (row-major), cols = flattened (channel, *kernel) patch."""
    win = _windows(x, kernel, stride)
    c = x.shape[0]
    rank = len(kernel)
    out_extents = win.shape[1:1 + rank]
    # (C, *out, *k) -> (*out, C, *k)
    order = tuple(range(1, 1 + rank)) + (0,) + tuple(range(1 + rank, 1 + 2 * rank))
    cols = win.transpose(order).reshape(prod(out_extents), c * prod(kernel))
    return cols, out_extents


def regular_conv(x, layer, counter=None, layer_index=None):
    c_in = x.shape[0]
    expected = layer.out_channels * c_in * prod(layer.kernel)
    if layer.weights.size != expected:
        raise ShapeError(f"regular_conv weights {layer.weights.size} do not fit {c_in} input channels")
    cols, out_extents = im2col(x.astype(np.float64), layer.kernel, layer.stride)
    w = layer.weights.astype(np.float64).reshape(layer.out_channels, -1)
    y = cols @ w.T + layer.bias.astype(np.float64)
    _count(counter, cols.shape[0] * cols.shape[1] * layer.out_channels, layer_index)
    return np.ascontiguousarray(y.T.reshape(layer.out_channels, *out_extents).astype(np.float32))


def depthwise_channel(plane, weights, bias, kernel, stride):
    """K output planes for one input channel.

    ``weights`` is (K, *kernel) for that channel, ``bias`` has K entries.
    Returns (K, *out) float32 and the MAC count.
    """
    cols, out_extents = im2col(plane[np.newaxis].astype(np.float64), kernel, stride)
    w = weights.astype(np.float64).reshape(weights.shape[0], -1)
    y = cols @ w.T + bias.astype(np.float64)
    out = y.T.reshape(weights.shape[0], *out_extents).astype(np.float32)
    return out, cols.shape[0] * cols.shape[1] * weights.shape[0]


def depthwise_weights(layer, n_in):
    """Depthwise kernel as (n_i, K, *kernel) plus bias as (n_i, K)."""
    k = layer.multiplier
    w = layer.weights.reshape(n_in, k, *layer.kernel)
    # bias is stored per output channel in (k-1)*n_i + i order
    b = layer.bias.reshape(k, n_in).T
    return w, b


def depthwise_conv(x, layer, counter=None, layer_index=None):
    n_in = x.shape[0]
    k = layer.multiplier
    if layer.weights.size != n_in * k * prod(layer.kernel):
        raise ShapeError(f"depthwise_conv weights {layer.weights.size} do not fit {n_in} input channels")
    w, b = depthwise_weights(layer, n_in)
    planes = []
    macs = 0
    for i in range(n_in):
        out, n = depthwise_channel(x[i], w[i], b[i], layer.kernel, layer.stride)
        planes.append(out)
        macs += n
    _count(counter, macs, layer_index)
    # stack as (n_i, K, ...) then reorder to output channel (k-1)*n_i + i
    grouped = np.stack(planes)
    return np.ascontiguousarray(grouped.swapaxes(0, 1).reshape(k * n_in, *grouped.shape[2:]))


def pointwise_conv(x, layer, counter=None, layer_index=None):
    c_in = x.shape[0]
    if layer.weights.size != layer.out_channels * c_in:
        raise ShapeError(f"pointwise_conv expects {layer.weights.size // layer.out_channels} "
                         f"input channels, got {c_in}")
    spatial = x.shape[1:]
    p = layer.weights.astype(np.float64).reshape(layer.out_channels, c_in)
    y = p @ x.reshape(c_in, -1).astype(np.float64) + layer.bias.astype(np.float64)[:, None]
    _count(counter, prod(spatial) * layer.out_channels * c_in, layer_index)
    return np.ascontiguousarray(y.reshape(layer.out_channels, *spatial).astype(np.float32))


def depthwise_separable(x, dw, pw, counter=None, layer_index=None):
    return pointwise_conv(depthwise_conv(x, dw, counter, layer_index), pw, counter, layer_index)


def maxpool(x, layer, counter=None, layer_index=None):
    win = _windows(x, layer.kernel, layer.stride)
    rank = len(layer.kernel)
    axes = tuple(range(-rank, 0))
    return np.ascontiguousarray(win.max(axis=axes).astype(np.float32))


def dense(x, layer, counter=None, layer_index=None):
    flat = x.reshape(-1).astype(np.float64)
    if layer.weights.size != flat.size * layer.units:
        raise ShapeError(f"dense expects {layer.weights.size // layer.units} inputs, got {flat.size}")
    w = layer.weights.astype(np.float64).reshape(layer.units, flat.size)
    y = w @ flat + layer.bias.astype(np.float64)
    _count(counter, flat.size * layer.units, layer_index)
    return y.astype(np.float32).reshape(layer.units, 1)


def relu(x, layer=None, counter=None, layer_index=None):
    return np.maximum(x, np.float32(0))


_DISPATCH = {
    RegularConv: regular_conv,
    DepthwiseConv: depthwise_conv,
    PointwiseConv: pointwise_conv,
    MaxPool: maxpool,
    Dense: dense,
    Relu: relu,
}


def apply_layer(x, layer, counter=None, layer_index=None):
    """Run one layer on a raw ``(C, *spatial)`` array."""
    return _DISPATCH[type(layer)](x, layer, counter, layer_index)


def run_layer(t, layer, counter=None, layer_index=None):
    """Tensor-level wrapper around :func:`apply_layer`."""
    return Tensor.from_array(apply_layer(t.array, layer, counter, layer_index))

