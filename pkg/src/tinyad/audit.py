"""Analytic accounting of MACs, parameters and per-mode activation memory.

Two memory views are reported for every mode:

* arena view: every byte the executor's arena holds (activations, the
  current layer's parameters with biases, the in-place temporary buffer and
  the patch holding buffer). Its peak equals the executor's measured
  high-water mark exactly.
* closed-form view: activations plus kernel weights per layer, the quantity
  the in-place and patch formulas speak about, in elements.
"""

from dataclasses import asdict, dataclass, field
from math import prod

from tinyad.modelio import Dense, DepthwiseConv, MaxPool, PointwiseConv, RegularConv, Relu
from tinyad.scheduler.executor import ExecMode
from tinyad.scheduler.patches import last_producer, plan_patches
from tinyad.tensor import BYTES_PER_ELEMENT, Shape

KB = 1000


def layer_macs(layer, in_shape, out_shape):
    out_pos = out_shape.plane_size
    if isinstance(layer, RegularConv):
        return out_pos * layer.out_channels * in_shape.channels * prod(layer.kernel)
    if isinstance(layer, DepthwiseConv):
        return out_pos * layer.multiplier * in_shape.channels * prod(layer.kernel)
    if isinstance(layer, PointwiseConv):
        return out_pos * layer.out_channels * in_shape.channels
    if isinstance(layer, Dense):
        return in_shape.element_count * layer.units
    return 0


def weight_count(layer):
    return int(layer.weights.size) if layer.learned else 0


def bias_count(layer):
    return int(layer.bias.size) if layer.learned else 0


# closed-form expressions for one depthwise layer, in elements

def depthwise_naive_elements(n, k, s_i, s_o, s_k):
    return n * s_i + n * k * s_o + n * k * s_k


def depthwise_inplace_elements(n, k, s_i, s_o, s_k):
    return (n + 1) * max(s_i, k * s_o) + k * n * s_k


def depthwise_tinyad_elements(n, k, s_i, s_o, s_k, m):
    return (n + 1) * max(s_i, k * s_o) / m + k * n * s_k


@dataclass
class ParamCount:
    weights: list
    biases: list

    @property
    def total_weights(self):
        return sum(self.weights)

    @property
    def total_biases(self):
        return sum(self.biases)

    @property
    def total(self):
        return self.total_weights + self.total_biases


def count_params(model):
    return ParamCount([weight_count(l) for l in model.layers], [bias_count(l) for l in model.layers])


def count_macs(model):
    """Per-layer MACs for one full (unpatched) inference."""
    return [layer_macs(l, model.shapes[i], model.shapes[i + 1]) for i, l in enumerate(model.layers)]


def _patch_shape(region, channels):
    return Shape(channels, region.extents)


def patched_layer_macs(model, plan):
    """Per-layer MACs when the trunk runs patch by patch (tail unchanged)."""
    macs = count_macs(model)
    for l in range(plan.end):
        total = 0
        for p in range(plan.m):
            in_s = _patch_shape(plan.inputs[p][l], model.shapes[l].channels)
            out_s = _patch_shape(plan.outputs[p][l], model.shapes[l + 1].channels)
            total += layer_macs(model.layers[l], in_s, out_s)
        macs[l] = total
    return macs


def patch_overhead_macs(model, plan):
    """Extra MACs spent recomputing overlapping receptive fields."""
    return sum(patched_layer_macs(model, plan)) - sum(count_macs(model))


def mode_macs(model, mode):
    if isinstance(mode, str):
        mode = ExecMode.parse(mode)
    if mode.patched and last_producer(model) is not None:
        return sum(patched_layer_macs(model, plan_patches(model, mode.m)))
    return sum(count_macs(model))


@dataclass
class LayerMemory:
    index: int
    kind: str
    live_bytes: int
    activation_bytes: int
    param_bytes: int
    temp_bytes: int
    holding_bytes: int
    in_place: bool
    closed_form_elements: int


@dataclass
class MemoryPlan:
    mode: str
    m: int
    layers: list
    peak_bytes: int
    dominant_layer: object
    closed_form_peak_elements: int
    closed_form_dominant: object
    temp_buffer_bytes: int
    holding_bytes: int
    budget: object = None

    @property
    def within_budget(self):
        return self.budget is None or self.peak_bytes <= self.budget

    def to_dict(self):
        d = asdict(self)
        d["within_budget"] = self.within_budget
        return d


def _closed_form(layer, in_s, out_s, in_place):
    w = weight_count(layer)
    if isinstance(layer, Relu):
        return in_s.element_count
    if in_place and isinstance(layer, DepthwiseConv):
        return (in_s.channels + 1) * max(in_s.plane_size, layer.multiplier * out_s.plane_size) + w
    return in_s.element_count + out_s.element_count + w


def _live(layer, in_bytes, in_s, out_s, in_place, to_holding):
    """(live bytes, activation bytes, temp bytes, bytes left in the slot afterwards)."""
    params = layer.param_bytes
    if isinstance(layer, Relu):
        return in_bytes, in_bytes, 0, in_bytes
    if in_place and isinstance(layer, DepthwiseConv) and not to_holding:
        need = max(in_s.plane_size, layer.multiplier * out_s.plane_size) * BYTES_PER_ELEMENT
        act = in_s.channels * need
        return act + need + params, act, need, out_s.nbytes
    out = 0 if to_holding else out_s.nbytes
    return in_bytes + out + params, in_bytes + out, 0, out


def activation_memory(model, mode, m=None, budget=None):
    """Analytic arena peak for ``mode`` (an ExecMode or ``"tinyad:3"``-style string)."""
    if isinstance(mode, str):
        mode = ExecMode.parse(mode, m)
    in_place = mode.in_place
    n_layers = len(model.layers)
    live = [0] * n_layers
    act = [0] * n_layers
    temp = [0] * n_layers
    closed = [0] * n_layers
    holding = 0

    def record(i, values, cf):
        lv, a, t = values
        if lv > live[i]:
            live[i], act[i] = lv, a
        temp[i] = max(temp[i], t)
        closed[i] = max(closed[i], cf)

    start = 0
    in_bytes = model.input_shape.nbytes
    if mode.patched and last_producer(model) is not None:
        plan = plan_patches(model, mode.m)
        last = last_producer(model)
        holding = model.shapes[plan.end].nbytes
        for p in range(plan.m):
            cur = plan.inputs[p][0].extents
            slot = model.input_shape.channels * prod(cur) * BYTES_PER_ELEMENT
            for l in range(plan.end):
                layer = model.layers[l]
                in_s = _patch_shape(plan.inputs[p][l], model.shapes[l].channels)
                out_s = _patch_shape(plan.outputs[p][l], model.shapes[l + 1].channels)
                if l > last:
                    record(l, (holding, holding, 0), _closed_form(layer, in_s, out_s, in_place))
                    continue
                lv, a, t, slot_after = _live(layer, slot, in_s, out_s, in_place, to_holding=(l == last))
                record(l, (holding + lv, holding + a, t), _closed_form(layer, in_s, out_s, in_place))
                slot = slot_after
        start = plan.end
        in_bytes = holding
    for l in range(start, n_layers):
        layer = model.layers[l]
        in_s, out_s = model.shapes[l], model.shapes[l + 1]
        use_in_place = in_place and start == 0
        lv, a, t, in_bytes = _live(layer, in_bytes, in_s, out_s, use_in_place, to_holding=False)
        record(l, (lv, a, t), _closed_form(layer, in_s, out_s, in_place))

    if n_layers:
        peak = max(live)
        dominant = live.index(peak)
        cf_peak = max(closed)
        cf_dom = closed.index(cf_peak)
    else:
        peak, dominant = model.input_shape.nbytes, None
        cf_peak, cf_dom = model.input_shape.element_count, None
    layers = [
        LayerMemory(i, model.layers[i].kind, live[i], act[i], model.layers[i].param_bytes, temp[i],
                    holding if (mode.patched and i < _end_or_zero(model, mode)) else 0,
                    in_place and isinstance(model.layers[i], DepthwiseConv), closed[i])
        for i in range(n_layers)
    ]
    return MemoryPlan(str(mode), mode.m, layers, peak, dominant, cf_peak, cf_dom,
                      max(temp, default=0), holding, budget)


def _end_or_zero(model, mode):
    from tinyad.scheduler.patches import trunk_end

    return trunk_end(model) if last_producer(model) is not None else 0


@dataclass
class LayerAudit:
    index: int
    kind: str
    in_shape: list
    out_shape: list
    macs: int
    weights: int
    biases: int
    param_bytes: int
    s_i: int
    s_o: int
    n_channels: int
    multiplier: int
    live_bytes: dict = field(default_factory=dict)


@dataclass
class ModelAudit:
    layers: list
    total_macs: int
    total_weights: int
    total_biases: int
    model_bytes: int
    plans: dict
    mode_macs: dict
    f1: object = None

    def to_dict(self):
        return {
            "units": {"bytes_per_element": BYTES_PER_ELEMENT, "kB": KB},
            "layers": [asdict(l) for l in self.layers],
            "totals": {
                "macs": self.total_macs,
                "weights": self.total_weights,
                "biases": self.total_biases,
                "model_bytes": self.model_bytes,
            },
            "modes": {k: dict(v.to_dict(), macs=self.mode_macs[k]) for k, v in self.plans.items()},
            "f1": self.f1,
        }

    def table(self):
        """Aligned text table with one row per mode."""
        head = f"{'Mode':<12}{'F1':>8}{'MACs(M)':>10}{'Model Size(kB)':>16}{'PeakMem(kB)-float32':>21}" \
               f"{'Closed-form(kB)':>17}{'Dominant':>10}{'Budget':>8}"
        rows = [head, "-" * len(head)]
        f1 = "-" if self.f1 is None else f"{self.f1:.3f}"
        for name, plan in self.plans.items():
            budget = "-" if plan.budget is None else ("pass" if plan.within_budget else "FAIL")
            dom = "input" if plan.dominant_layer is None else str(plan.dominant_layer)
            rows.append(
                f"{name:<12}{f1:>8}{self.mode_macs[name] / 1e6:>10.3f}{self.model_bytes / KB:>16.2f}"
                f"{plan.peak_bytes / KB:>21.2f}{plan.closed_form_peak_elements * BYTES_PER_ELEMENT / KB:>17.2f}"
                f"{dom:>10}{budget:>8}"
            )
        rows.append("kB = 1000 bytes; float32 = 4 bytes/element")
        return "\n".join(rows)


def audit_model(model, modes=("naive", "inplace", "patch", "tinyad"), m=3, budget=None, f1=None):
    params = count_params(model)
    macs = count_macs(model)
    plans = {}
    mmacs = {}
    for name in modes:
        mode = ExecMode.parse(name, m)
        key = str(mode)
        plans[key] = activation_memory(model, mode, budget=budget)
        mmacs[key] = mode_macs(model, mode)
    layers = []
    for i, layer in enumerate(model.layers):
        in_s, out_s = model.shapes[i], model.shapes[i + 1]
        layers.append(LayerAudit(
            i, layer.kind, in_s.as_list(), out_s.as_list(), macs[i], params.weights[i], params.biases[i],
            layer.param_bytes, in_s.plane_size, out_s.plane_size, in_s.channels,
            getattr(layer, "multiplier", 1),
            {k: p.layers[i].live_bytes for k, p in plans.items()},
        ))
    return ModelAudit(layers, sum(macs), params.total_weights, params.total_biases,
                      params.total * BYTES_PER_ELEMENT, plans, mmacs, f1)
