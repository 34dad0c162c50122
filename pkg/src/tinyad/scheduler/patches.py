"""Patch planning: split the conv trunk's output and back-compute receptive fields."""

from dataclasses import dataclass

import numpy as np

from tinyad.errors import PlanError, ShapeError
from tinyad.modelio import Dense, Relu
from tinyad.tensor import Region, Tensor


def trunk_end(model):
    """Index one past the last layer of the patchable prefix (everything before the first dense)."""
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Dense):
            return i
    return len(model.layers)


def last_producer(model):
    """Index of the last non-relu layer in the patchable prefix, or None if there is none."""
    end = trunk_end(model)
    for i in range(end - 1, -1, -1):
        if not isinstance(model.layers[i], Relu):
            return i
    return None


def split_extent(extent, m):
    """Contiguous ranges covering ``[0, extent)``; the first ``extent % m`` get one extra element."""
    if m < 1:
        raise PlanError(f"patch count must be >= 1, got {m}")
    if m > extent:
        raise PlanError(f"cannot split extent {extent} into {m} patches")
    base, extra = divmod(extent, m)
    ranges = []
    lo = 0
    for p in range(m):
        hi = lo + base + (1 if p < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def input_range(layer, axis, lo, hi):
    """Input range along ``axis`` that a layer needs to produce outputs ``[lo, hi)``."""
    win = layer.window()
    if win is None:
        return lo, hi
    kernel, stride = win
    k, s = kernel[axis], stride[axis]
    return lo * s, (hi - 1) * s + k


@dataclass
class PatchPlan:
    m: int
    axis: int
    end: int
    output_ranges: list
    inputs: list    # inputs[p][l]: Region of layer l's input needed by patch p
    outputs: list   # outputs[p][l]: Region of layer l's output produced for patch p
    overlaps: list  # overlaps[p][l]: positions along the split axis shared with patch p-1

    @property
    def input_fields(self):
        """Receptive field of every patch on the model input."""
        return [regions[0] for regions in self.inputs]

    def describe(self):
        return ", ".join(f"[{r.ranges[self.axis][0]},{r.ranges[self.axis][1]})" for r in self.input_fields)


def plan_patches(model, m):
    """Split the final trunk output into ``m`` patches along the temporal (last) axis."""
    end = trunk_end(model)
    if last_producer(model) is None:
        raise PlanError("model has no convolution or pooling layers to patch")
    out_shape = model.shapes[end]
    axis = out_shape.rank - 1
    ranges = split_extent(out_shape.spatial[axis], m)
    inputs, outputs = [], []
    for lo, hi in ranges:
        ins = [None] * end
        outs = [None] * end
        for l in range(end - 1, -1, -1):
            in_shape, o_shape = model.shapes[l], model.shapes[l + 1]
            outs[l] = _region(o_shape, axis, lo, hi)
            lo, hi = input_range(model.layers[l], axis, lo, hi)
            if hi > in_shape.spatial[axis]:
                raise ShapeError(f"receptive field [{lo},{hi}) exceeds layer {l} input extent")
            ins[l] = _region(in_shape, axis, lo, hi)
        inputs.append(ins)
        outputs.append(outs)
    overlaps = []
    for p in range(m):
        row = []
        for l in range(end):
            if p == 0:
                row.append(0)
                continue
            a0, a1 = inputs[p - 1][l].ranges[axis]
            b0, b1 = inputs[p][l].ranges[axis]
            row.append(max(0, min(a1, b1) - max(a0, b0)))
        overlaps.append(row)
    return PatchPlan(m, axis, end, ranges, inputs, outputs, overlaps)


def _region(shape, axis, lo, hi):
    ranges = [(0, s) for s in shape.spatial]
    ranges[axis] = (lo, hi)
    return Region(tuple(ranges))


def stitch_outputs(patch_outputs, plan):
    """Concatenate per-patch trunk outputs along the split axis."""
    if len(patch_outputs) != plan.m:
        raise ShapeError(f"expected {plan.m} patch outputs, got {len(patch_outputs)}")
    arrays = []
    for p, t in enumerate(patch_outputs):
        arr = t.array if hasattr(t, "array") else np.asarray(t)
        lo, hi = plan.output_ranges[p]
        if arr.shape[1 + plan.axis] != hi - lo:
            raise ShapeError(f"patch {p} has extent {arr.shape[1 + plan.axis]}, plan expects {hi - lo}")
        arrays.append(arr)
    return Tensor.from_array(np.concatenate(arrays, axis=1 + plan.axis))
