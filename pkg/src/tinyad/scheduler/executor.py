"""Execute a model under one of four memory modes inside an arena model.

Naive     layer by layer, input and output slots alternate.
InPlace   as Naive, but depthwise layers overwrite their input channel by channel.
PatchOnly the conv trunk runs once per output patch on its receptive field;
          outputs land in a holding buffer, the dense tail runs on the stitched map.
TinyAD    PatchOnly with in-place depthwise layers inside each patch.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from tinyad import kernels
from tinyad.errors import PlanError, ShapeError
from tinyad.modelio import DepthwiseConv, Relu, stream_layers
from tinyad.scheduler.arena import PARAM_SLOT, ArenaModel
from tinyad.scheduler.patches import last_producer, plan_patches, trunk_end
from tinyad.tensor import BYTES_PER_ELEMENT, Tensor

MODES = ("naive", "inplace", "patch", "tinyad")


@dataclass(frozen=True)
class ExecMode:
    kind: str
    m: int = 1

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown mode {self.kind!r}; expected one of {MODES}")
        if self.m < 1:
            raise PlanError(f"patch count must be >= 1, got {self.m}")

    @classmethod
    def parse(cls, text, m=None):
        """``naive``, ``inplace``, ``patch:3``, ``tinyad:3`` (or kind plus explicit ``m``)."""
        kind, _, count = text.partition(":")
        kind = {"patchonly": "patch", "patch_only": "patch", "in_place": "inplace"}.get(kind.lower(), kind.lower())
        if count:
            m = int(count)
        if kind in ("naive", "inplace"):
            return cls(kind, 1)
        return cls(kind, 1 if m is None else m)

    @property
    def patched(self):
        return self.kind in ("patch", "tinyad") and self.m > 1

    @property
    def in_place(self):
        return self.kind in ("inplace", "tinyad")

    def __str__(self):
        return f"{self.kind}:{self.m}" if self.kind in ("patch", "tinyad") else self.kind


NAIVE = ExecMode("naive")
INPLACE = ExecMode("inplace")


def PatchOnly(m):
    return ExecMode("patch", m)


def TinyAD(m):
    return ExecMode("tinyad", m)


@dataclass
class ExecResult:
    output: Tensor
    measured_peak: int
    mac_count: int
    arena: ArenaModel
    counter: kernels.MacCounter
    plan: object = None


class _Act:
    """An activation held in one arena slot; ``perm`` maps logical channel -> stored channel."""

    __slots__ = ("data", "slot", "perm")

    def __init__(self, data, slot, perm=None):
        self.data = data
        self.slot = slot
        self.perm = perm

    def logical(self):
        return self.data if self.perm is None else self.data[self.perm]


def inplace_depthwise(x, layer, buffer_elems=None, arena=None, slot=None, counter=None, layer_index=None):
    """Depthwise conv computed channel by channel through one temporary buffer.

    Every channel slot holds ``max(s_i, K*s_o)`` elements. Channel c's K output
    planes are computed into the buffer while its input is still intact, then
    copied back over that same slot. Returns the stored planes, grouped K per
    input channel, and the permutation presenting them in (k-1)*n_i + i order.
    """
    n = x.shape[0]
    k = layer.multiplier
    in_spatial = x.shape[1:]
    s_i = prod(in_spatial)
    out_spatial = layer.output_shape(_shape_of(x)).spatial
    s_o = prod(out_spatial)
    need = max(s_i, k * s_o)
    if buffer_elems is None:
        buffer_elems = need
    if buffer_elems < need:
        raise PlanError(f"in-place buffer of {buffer_elems} elements is smaller than max(s_i, K*s_o) = {need}")

    if arena is not None:
        arena.resize(slot, n * need * BYTES_PER_ELEMENT)
        arena.alloc(PARAM_SLOT, layer.param_bytes)
        arena.alloc("temp", buffer_elems * BYTES_PER_ELEMENT)

    slots = np.zeros((n, need), dtype=np.float32)
    slots[:, :s_i] = x.reshape(n, s_i)
    buffer = np.zeros(buffer_elems, dtype=np.float32)
    w, b = kernels.depthwise_weights(layer, n)
    macs = 0
    for c in range(n):
        planes, used = kernels.depthwise_channel(slots[c, :s_i].reshape(in_spatial), w[c], b[c],
                                                 layer.kernel, layer.stride)
        buffer[:k * s_o] = planes.reshape(-1)
        slots[c, :k * s_o] = buffer[:k * s_o]
        macs += used
    if counter is not None:
        counter.add(macs, layer_index)

    if arena is not None:
        arena.free("temp")
        arena.free(PARAM_SLOT)
        # compact the per-channel slots down to K*s_o each
        arena.resize(slot, n * k * s_o * BYTES_PER_ELEMENT)

    stored = np.ascontiguousarray(slots[:, :k * s_o]).reshape(n * k, *out_spatial)
    perm = np.array([c * k + j for j in range(k) for c in range(n)], dtype=np.intp)
    return stored, perm


def _shape_of(arr):
    from tinyad.tensor import Shape

    return Shape(arr.shape[0], arr.shape[1:])


class _Executor:
    def __init__(self, model, mode, arena, source):
        self.model = model
        self.mode = mode
        self.arena = arena
        self.source = source
        self.counter = kernels.MacCounter()
        self.slot_flip = 0
        self.streams = []

    def layers(self, start=0, stop=None):
        """(index, layer) pairs; read from the model file one layer at a time when a source is given."""
        stop = len(self.model.layers) if stop is None else stop
        if self.source is None:
            for i in range(start, stop):
                yield i, self.model.layers[i]
            return
        stream = stream_layers(self.source)
        self.streams.append(stream)
        try:
            for i, (layer, _nbytes) in enumerate(stream):
                if i >= stop:
                    break
                if i >= start:
                    yield i, layer
        finally:
            stream.close()

    def next_slot(self):
        self.slot_flip ^= 1
        return "B" if self.slot_flip else "A"

    def step(self, i, layer, act, in_place, holding=None, region=None):
        """Run layer ``i`` on ``act``. When ``holding`` is given, write into it at ``region``."""
        arena = self.arena
        arena.layer = i
        if isinstance(layer, Relu):
            if holding is not None:
                view = holding[_index(region)]
                np.maximum(view, 0, out=view)
                return act
            act.data = kernels.relu(act.data)
            return act
        if in_place and isinstance(layer, DepthwiseConv) and holding is None:
            stored, perm = inplace_depthwise(act.logical(), layer, arena=arena, slot=act.slot,
                                             counter=self.counter, layer_index=i)
            return _Act(stored, act.slot, perm)
        if layer.learned:
            arena.alloc(PARAM_SLOT, layer.param_bytes)
        y = kernels.apply_layer(act.logical(), layer, self.counter, i)
        if holding is not None:
            target = holding[_index(region)]
            if target.shape != y.shape:
                raise ShapeError(f"layer {i} produced {y.shape}, holding region expects {target.shape}")
            target[...] = y
            out = None
        else:
            out = _Act(y, self.next_slot())
            arena.alloc(out.slot, y.nbytes)
        arena.free(act.slot)
        if layer.learned:
            arena.free(PARAM_SLOT)
        return out

    def run_layerwise(self, x, in_place):
        self.arena.alloc("input", x.nbytes)
        act = _Act(x, "input")
        for i, layer in self.layers():
            act = self.step(i, layer, act, in_place)
        return act.logical()

    def run_patched(self, x, in_place):
        model = self.model
        plan = plan_patches(model, self.mode.m)
        end = plan.end
        last = last_producer(model)
        out_shape = model.shapes[end]
        holding = np.zeros((out_shape.channels, *out_shape.spatial), dtype=np.float32)
        self.arena.alloc("holding", holding.nbytes)
        for p in range(plan.m):
            self.arena.layer = None
            field = plan.inputs[p][0]
            patch = np.ascontiguousarray(x[_index(field)])
            self.arena.alloc("input", patch.nbytes)
            act = _Act(patch, "input")
            for i, layer in self.layers(0, end):
                if i < last:
                    act = self.step(i, layer, act, in_place)
                else:
                    act = self.step(i, layer, act, in_place, holding=holding, region=plan.outputs[p][i])
        act = _Act(holding, "holding")
        for i, layer in self.layers(end):
            act = self.step(i, layer, act, in_place=False)
        return act.logical(), plan


def _index(region):
    return (slice(None),) + tuple(slice(lo, hi) for lo, hi in region.ranges)


def execute(model, x, mode=NAIVE, arena=None, source=None):
    """Run ``model`` on tensor ``x``; returns output, measured arena peak and MAC count.

    ``source`` (a model file path) makes the executor re-read parameters layer by
    layer from disk instead of using the weights already held in ``model``.
    """
    if isinstance(mode, str):
        mode = ExecMode.parse(mode)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match model input {model.input_shape}")
    arena = ArenaModel() if arena is None else arena
    ex = _Executor(model, mode, arena, source)
    data = np.array(x.array, dtype=np.float32)
    plan = None
    if mode.patched and last_producer(model) is not None:
        out, plan = ex.run_patched(data, mode.in_place)
    else:
        out = ex.run_layerwise(data, mode.in_place)
    result = ExecResult(Tensor.from_array(out), arena.high_water, ex.counter.total, arena, ex.counter, plan)
    result.streams = ex.streams
    return result


def execute_trunk_patch(model, x, plan, p, in_place=False):
    """Trunk output for patch ``p`` alone (used for stitching checks)."""
    end = plan.end
    act = np.ascontiguousarray(x.array[_index(plan.inputs[p][0])])
    ex = _Executor(model, ExecMode("naive"), ArenaModel(), None)
    ex.arena.alloc("input", act.nbytes)
    cur = _Act(act, "input")
    for i in range(end):
        cur = ex.step(i, model.layers[i], cur, in_place)
    return Tensor.from_array(cur.logical())


__all__ = ["ExecMode", "ExecResult", "INPLACE", "NAIVE", "PatchOnly", "TinyAD", "execute",
           "inplace_depthwise", "trunk_end"]
