"""On-disk model format and a streaming layer loader.

A model file is UTF-8 JSON::

    {"format_version": 1,
     "input_shape": [C, L] | [C, H, W],
     "layers": [{"type": "regular_conv", "kernel": [3], "stride": 1,
                 "out_channels": 32, "weights": [...], "bias": [...]}, ...]}

Flattened weight orders:

    regular_conv    [n_o][n_i][k_h][k_w]
    depthwise_conv  [n_i][K][k_h][k_w]    (outputs ordered (k-1)*n_i + i)
    pointwise_conv  [n_o][K*n_i]
    dense           [units][in]

``stream_layers`` decodes one layer object at a time from an incrementally
read buffer, so at most one layer's weights are ever materialised.
"""

import io
import json
import os
from dataclasses import dataclass, field
from math import ceil, prod

import numpy as np

from tinyad.errors import ParseError, ShapeError, StreamError, ValidationError
from tinyad.tensor import BYTES_PER_ELEMENT, Shape

FORMAT_VERSION = 1
PAGE_SIZE = 8192
LAYER_TYPES = ("regular_conv", "depthwise_conv", "pointwise_conv", "max_pool", "dense", "relu")


def _axes(value, rank, name):
    if isinstance(value, (list, tuple)):
        vals = tuple(int(v) for v in value)
        if len(vals) == 1 and rank != 1:
            vals = vals * rank
    else:
        vals = (int(value),) * rank
    if len(vals) != rank:
        raise ShapeError(f"{name} has {len(vals)} axes, expected {rank}")
    if any(v < 1 for v in vals):
        raise ShapeError(f"{name} must be positive, got {vals}")
    return vals


def _valid_extents(in_extents, kernel, stride):
    if len(kernel) != len(in_extents):
        raise ShapeError(f"kernel rank {len(kernel)} does not match input rank {len(in_extents)}")
    out = []
    for n, k, s in zip(in_extents, kernel, stride):
        if k > n:
            raise ShapeError(f"kernel extent {k} larger than input extent {n}")
        out.append((n - k) // s + 1)
    return tuple(out)


class Layer:
    kind = None
    spatial = False  # True for layers with a kernel sliding over space
    learned = False

    weights = None
    bias = None

    def output_shape(self, in_shape):
        raise NotImplementedError

    def expected_counts(self, in_shape):
        """(weight count, bias count) implied by the input shape."""
        return 0, 0

    @property
    def param_count(self):
        if not self.learned:
            return 0
        return int(self.weights.size + self.bias.size)

    @property
    def param_bytes(self):
        return self.param_count * BYTES_PER_ELEMENT

    def window(self):
        """(kernel, stride) per spatial axis, or None for position-wise layers."""
        return None

    def to_obj(self):
        raise NotImplementedError


@dataclass(eq=False)
class RegularConv(Layer):
    kernel: tuple
    out_channels: int
    weights: np.ndarray
    bias: np.ndarray
    stride: tuple = (1,)

    kind = "regular_conv"
    spatial = True
    learned = True

    def __post_init__(self):
        self.kernel = _axes(self.kernel, len(self.kernel), "kernel")
        self.stride = _axes(self.stride, len(self.kernel), "stride")
        if self.out_channels < 1:
            raise ShapeError("out_channels must be positive")

    def output_shape(self, in_shape):
        return Shape(self.out_channels, _valid_extents(in_shape.spatial, self.kernel, self.stride))

    def expected_counts(self, in_shape):
        return in_shape.channels * self.out_channels * prod(self.kernel), self.out_channels

    def window(self):
        return self.kernel, self.stride

    def to_obj(self):
        return {"type": self.kind, "kernel": list(self.kernel), "stride": list(self.stride),
                "out_channels": self.out_channels, "weights": self.weights, "bias": self.bias}


@dataclass(eq=False)
class DepthwiseConv(Layer):
    kernel: tuple
    multiplier: int
    weights: np.ndarray
    bias: np.ndarray
    stride: tuple = (1,)

    kind = "depthwise_conv"
    spatial = True
    learned = True

    def __post_init__(self):
        self.kernel = _axes(self.kernel, len(self.kernel), "kernel")
        self.stride = _axes(self.stride, len(self.kernel), "stride")
        if self.multiplier < 1:
            raise ShapeError("multiplier must be >= 1")

    def output_shape(self, in_shape):
        extents = _valid_extents(in_shape.spatial, self.kernel, self.stride)
        return Shape(self.multiplier * in_shape.channels, extents)

    def expected_counts(self, in_shape):
        n_out = self.multiplier * in_shape.channels
        return n_out * prod(self.kernel), n_out

    def window(self):
        return self.kernel, self.stride

    def to_obj(self):
        return {"type": self.kind, "kernel": list(self.kernel), "stride": list(self.stride),
                "multiplier": self.multiplier, "weights": self.weights, "bias": self.bias}


@dataclass(eq=False)
class PointwiseConv(Layer):
    out_channels: int
    weights: np.ndarray
    bias: np.ndarray

    kind = "pointwise_conv"
    learned = True

    def output_shape(self, in_shape):
        return Shape(self.out_channels, in_shape.spatial)

    def expected_counts(self, in_shape):
        return self.out_channels * in_shape.channels, self.out_channels

    def to_obj(self):
        return {"type": self.kind, "out_channels": self.out_channels,
                "weights": self.weights, "bias": self.bias}


@dataclass(eq=False)
class MaxPool(Layer):
    kernel: tuple
    stride: tuple = None

    kind = "max_pool"
    spatial = True

    def __post_init__(self):
        self.kernel = _axes(self.kernel, len(self.kernel), "kernel")
        self.stride = _axes(self.kernel if self.stride is None else self.stride, len(self.kernel), "stride")

    def output_shape(self, in_shape):
        return Shape(in_shape.channels, _valid_extents(in_shape.spatial, self.kernel, self.stride))

    def window(self):
        return self.kernel, self.stride

    def to_obj(self):
        return {"type": self.kind, "kernel": list(self.kernel), "stride": list(self.stride)}


@dataclass(eq=False)
class Dense(Layer):
    units: int
    weights: np.ndarray
    bias: np.ndarray

    kind = "dense"
    learned = True

    def output_shape(self, in_shape):
        return Shape(self.units, (1,))

    def expected_counts(self, in_shape):
        return in_shape.element_count * self.units, self.units

    def to_obj(self):
        return {"type": self.kind, "units": self.units, "weights": self.weights, "bias": self.bias}


@dataclass(eq=False)
class Relu(Layer):
    kind = "relu"

    def output_shape(self, in_shape):
        return in_shape

    def to_obj(self):
        return {"type": self.kind}


@dataclass
class ModelSpec:
    input_shape: Shape
    layers: list
    shapes: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.shapes:
            self.shapes = infer_shapes(self.input_shape, self.layers)

    @property
    def output_shape(self):
        return self.shapes[-1]

    def layer_io(self, index):
        return self.shapes[index], self.shapes[index + 1]


def infer_shapes(input_shape, layers):
    """Input shape followed by each layer's output shape; validates weight counts."""
    shapes = [input_shape]
    for i, layer in enumerate(layers):
        try:
            out = layer.output_shape(shapes[-1])
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        _check_counts(layer, shapes[-1], i)
        shapes.append(out)
    return shapes


def _check_counts(layer, in_shape, index):
    if not layer.learned:
        return
    n_w, n_b = layer.expected_counts(in_shape)
    if layer.weights.size != n_w:
        raise ValidationError(f"{layer.kind} expects {n_w} weights, got {layer.weights.size}", index)
    if layer.bias.size != n_b:
        raise ValidationError(f"{layer.kind} expects {n_b} bias values, got {layer.bias.size}", index)


def _numbers(obj, key, index):
    if key not in obj:
        raise ParseError(f"layer {index} missing field", field=key)
    vals = obj[key]
    if not isinstance(vals, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
    ):
        raise ParseError(f"layer {index} expects a flat list of numbers", field=key)
    arr = np.asarray(vals, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"layer {index} has non-finite values", field=key)
    return arr.astype(np.float32)


def _int_field(obj, key, index, default=None):
    if key not in obj:
        if default is not None:
            return default
        raise ParseError(f"layer {index} missing field", field=key)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, list)):
        raise ParseError(f"layer {index} expects an integer or integer list", field=key)
    if isinstance(val, list) and not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
        raise ParseError(f"layer {index} expects integers", field=key)
    return val


def layer_from_obj(obj, index):
    if not isinstance(obj, dict):
        raise ParseError(f"layer {index} is not an object", field="layers")
    kind = obj.get("type")
    if kind not in LAYER_TYPES:
        raise ParseError(f"layer {index} has unknown type {kind!r}", field="type")
    try:
        if kind == "relu":
            return Relu()
        if kind == "max_pool":
            kernel = _kernel(obj, index)
            return MaxPool(kernel, _int_field(obj, "stride", index, default=list(kernel)))
        if kind == "dense":
            return Dense(_positive(obj, "units", index), _numbers(obj, "weights", index), _numbers(obj, "bias", index))
        if kind == "pointwise_conv":
            return PointwiseConv(_positive(obj, "out_channels", index),
                                 _numbers(obj, "weights", index), _numbers(obj, "bias", index))
        kernel = _kernel(obj, index)
        stride = _int_field(obj, "stride", index, default=1)
        if kind == "regular_conv":
            return RegularConv(kernel, _positive(obj, "out_channels", index),
                               _numbers(obj, "weights", index), _numbers(obj, "bias", index), stride)
        return DepthwiseConv(kernel, _positive(obj, "multiplier", index),
                             _numbers(obj, "weights", index), _numbers(obj, "bias", index), stride)
    except ShapeError as exc:
        raise ValidationError(str(exc), index) from None


def _positive(obj, key, index):
    val = _int_field(obj, key, index)
    if not isinstance(val, int) or val < 1:
        raise ValidationError(f"{key} must be a positive integer, got {val!r}", index)
    return val


def _kernel(obj, index):
    val = _int_field(obj, "kernel", index)
    kernel = list(val) if isinstance(val, list) else [val]
    if not 1 <= len(kernel) <= 2:
        raise ValidationError(f"kernel must have 1 or 2 axes, got {kernel}", index)
    return tuple(kernel)


def _input_shape(val):
    if not isinstance(val, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
        raise ParseError("input_shape must be a list of integers", field="input_shape")
    try:
        return Shape.from_list(val)
    except ShapeError as exc:
        raise ParseError(str(exc), field="input_shape") from None


def _check_version(val):
    if val != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {val!r}", field="format_version")


def _read_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    text = source.read()
    return text.decode("utf-8") if isinstance(text, bytes) else text


def parse_model(source):
    """Parse and fully validate a model file (path or text file object)."""
    text = _read_text(source)
    return parse_model_text(text)


def parse_model_text(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("format_version", "input_shape", "layers"):
        if key not in doc:
            raise ParseError("missing top-level field", field=key)
    _check_version(doc["format_version"])
    input_shape = _input_shape(doc["input_shape"])
    if not isinstance(doc["layers"], list):
        raise ParseError("layers must be a list", field="layers")
    layers = [layer_from_obj(obj, i) for i, obj in enumerate(doc["layers"])]
    return ModelSpec(input_shape, layers, infer_shapes(input_shape, layers), doc["format_version"])


def _render(values):
    # str() of a numpy float32 is its shortest round-trip decimal form
    return "[" + ",".join(str(v) for v in np.asarray(values, dtype=np.float32)) + "]"


def serialize(model):
    """Render ``model`` as JSON text; ``parse_model_text(serialize(m))`` reproduces it bit-exactly."""
    lines = [
        "{",
        f'  "format_version": {model.format_version},',
        f'  "input_shape": {json.dumps(model.input_shape.as_list())},',
        '  "layers": [',
    ]
    rendered = []
    for layer in model.layers:
        obj = layer.to_obj()
        parts = []
        for key, val in obj.items():
            if isinstance(val, np.ndarray):
                parts.append(f'"{key}": {_render(val)}')
            else:
                parts.append(f'"{key}": {json.dumps(val)}')
        rendered.append("    {" + ", ".join(parts) + "}")
    lines.append(",\n".join(rendered))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(model))


def flash_pages(param_bytes, page_size=PAGE_SIZE):
    return ceil(param_bytes / page_size) if param_bytes > 0 else 0


class _Cursor:
    """Pull-based JSON tokenizer over a text stream, reading in chunks."""

    def __init__(self, fh, chunk_size):
        self.fh = fh
        self.chunk_size = chunk_size
        self.buf = ""
        self.pos = 0
        self.eof = False
        self.line_base = 1
        self.decoder = json.JSONDecoder()

    def _fill(self):
        if self.eof:
            return False
        chunk = self.fh.read(self.chunk_size)
        if isinstance(chunk, bytes):
            chunk = chunk.decode("utf-8")
        if not chunk:
            self.eof = True
            return False
        # drop the consumed prefix so only the current object stays buffered
        self.line_base += self.buf.count("\n", 0, self.pos)
        self.buf = self.buf[self.pos:] + chunk
        self.pos = 0
        return True

    @property
    def line(self):
        return self.line_base + self.buf.count("\n", 0, self.pos)

    def peek(self):
        while True:
            while self.pos < len(self.buf) and self.buf[self.pos] in " \t\r\n":
                self.pos += 1
            if self.pos < len(self.buf):
                return self.buf[self.pos]
            if not self._fill():
                raise ParseError("unexpected end of input", line=self.line)

    def expect(self, ch):
        got = self.peek()
        if got != ch:
            raise ParseError(f"expected {ch!r}, found {got!r}", line=self.line)
        self.pos += 1

    def value(self):
        self.peek()
        while True:
            try:
                val, end = self.decoder.raw_decode(self.buf, self.pos)
            except json.JSONDecodeError as exc:
                if self._fill():
                    continue
                raise ParseError(f"malformed JSON: {exc.msg}", line=self.line) from None
            # a number may continue in the next chunk
            if end == len(self.buf) and not self.eof and isinstance(val, (int, float)):
                if self._fill():
                    continue
            self.pos = end
            return val


class LayerStream:
    """Iterator over ``(layer, param_bytes)`` decoded one layer at a time.

    ``trace`` records resident parameter bytes after every load and release;
    ``hook``, when given, is called with each new resident value.
    """

    def __init__(self, source, chunk_size=65536, hook=None):
        self._own = isinstance(source, (str, os.PathLike))
        self._fh = open(source, encoding="utf-8") if self._own else source
        self._cursor = _Cursor(self._fh, chunk_size)
        self.hook = hook
        self.trace = [0]
        self.last_good_index = -1
        self.input_shape = None
        self.shapes = []
        self._started = False
        self._done = False

    @property
    def resident_peak(self):
        return max(self.trace)

    def _record(self, nbytes):
        self.trace.append(nbytes)
        if self.hook is not None:
            self.hook(nbytes)

    def _header(self):
        cur = self._cursor
        cur.expect("{")
        seen = {}
        while True:
            key = cur.value()
            if not isinstance(key, str):
                raise ParseError("object keys must be strings", line=cur.line)
            cur.expect(":")
            if key == "layers":
                if "input_shape" not in seen or "format_version" not in seen:
                    raise ParseError("format_version and input_shape must precede layers", field="layers")
                cur.expect("[")
                return
            seen[key] = cur.value()
            if key == "format_version":
                _check_version(seen[key])
            elif key == "input_shape":
                self.input_shape = _input_shape(seen[key])
                self.shapes = [self.input_shape]
            if cur.peek() == ",":
                cur.pos += 1
            else:
                raise ParseError("missing field", field="layers")

    def __iter__(self):
        return self

    def __next__(self):
        if self._done:
            raise StopIteration
        index = self.last_good_index + 1
        try:
            if not self._started:
                self._started = True
                self._header()
                if self._cursor.peek() == "]":
                    self._cursor.pos += 1
                    return self._finish()
            elif self._cursor.peek() == "]":
                self._cursor.pos += 1
                return self._finish()
            else:
                self._cursor.expect(",")
            obj = self._cursor.value()
        except (ParseError, OSError, UnicodeDecodeError) as exc:
            self._release()
            self.close()
            raise StreamError(f"stream failed at layer {index}: {exc}", self.last_good_index) from exc
        layer = layer_from_obj(obj, index)
        _check_counts(layer, self.shapes[-1], index)
        self.shapes.append(layer.output_shape(self.shapes[-1]))
        del obj
        self._release()
        self._record(layer.param_bytes)
        self.last_good_index = index
        return layer, layer.param_bytes

    def _release(self):
        if self.trace[-1] != 0:
            self._record(0)

    def _finish(self):
        self._release()
        self._done = True
        self.close()
        raise StopIteration

    def close(self):
        if self._own and not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def stream_layers(source, chunk_size=65536, hook=None):
    """Open a streaming cursor over a model file (path, file object, or JSON text via io.StringIO)."""
    return LayerStream(source, chunk_size=chunk_size, hook=hook)


def stream_text(text, **kwargs):
    return LayerStream(io.StringIO(text), **kwargs)
