"""Simulated, calibrated inference latency with and without load/compute overlap.

Times are in microseconds internally and reported in milliseconds. Nothing
here is measured on hardware: per-MAC and per-byte costs are knobs whose
defaults were fitted to one reference model (see ``calibrate``).
"""

import csv
import io
from dataclasses import asdict, dataclass, field
from math import ceil

from tinyad.audit import count_macs, patched_layer_macs
from tinyad.modelio import DepthwiseConv
from tinyad.scheduler.executor import ExecMode
from tinyad.scheduler.patches import last_producer, plan_patches
from tinyad.tensor import BYTES_PER_ELEMENT

# Fitted with calibrate(dw_cnn(config("SWaT(2)")), prep_ms=29.33, fwd_ms=15.42).
DEFAULT_MAC_TIME_US = 0.005727
DEFAULT_DECODE_US_PER_BYTE = 0.4619


@dataclass(frozen=True)
class FlashModel:
    page_size: int = 8192
    t_read_us: float = 25.0
    decode_us_per_byte: float = DEFAULT_DECODE_US_PER_BYTE
    mac_time_us: float = DEFAULT_MAC_TIME_US
    copy_us_per_byte: float = 0.0005

    def __post_init__(self):
        for name in ("page_size", "t_read_us", "decode_us_per_byte", "mac_time_us"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.copy_us_per_byte < 0:
            raise ValueError("copy_us_per_byte must be non-negative")


def pages(param_bytes, page_size=8192):
    return ceil(param_bytes / page_size) if param_bytes > 0 else 0


def layer_prep(param_bytes, flash=FlashModel()):
    """Page reads plus decoding for one layer's parameters, in microseconds."""
    if param_bytes < 0:
        raise ValueError("param_bytes must be >= 0")
    return pages(param_bytes, flash.page_size) * flash.t_read_us + param_bytes * flash.decode_us_per_byte


@dataclass(frozen=True)
class Span:
    layer: object
    resource: str
    start: float
    end: float


@dataclass
class Timeline:
    threads: int
    spans: list
    total: float

    def to_csv(self, scale=1e-3):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "resource", "start", "end"])
        for s in self.spans:
            w.writerow([s.layer, s.resource, f"{s.start * scale:.6f}", f"{s.end * scale:.6f}"])
        return buf.getvalue()


def simulate(layers, threads=1, names=None):
    """Event timeline for ``layers`` = [(prep, fwd), ...].

    threads=1 runs load and compute strictly in sequence. threads=2 has one
    loader and one compute resource: loads run back to back, and compute i
    waits for both its load and compute i-1.
    """
    if not layers:
        raise ValueError("simulate needs at least one layer")
    if threads not in (1, 2):
        raise ValueError(f"threads must be 1 or 2, got {threads}")
    names = list(range(len(layers))) if names is None else list(names)
    spans = []
    load_done = compute_done = 0.0
    for name, (prep, fwd) in zip(names, layers):
        load_start = compute_done if threads == 1 else load_done
        load_done = load_start + prep
        spans.append(Span(name, "loader", load_start, load_done))
        start = max(load_done, compute_done)
        compute_done = start + fwd
        spans.append(Span(name, "compute", start, compute_done))
    return Timeline(threads, spans, compute_done)


@dataclass
class LayerTiming:
    index: int
    kind: str
    param_bytes: int
    pages: int
    macs: int
    prep_us: float
    fwd_us: float


@dataclass
class LatencyProfile:
    mode: str
    per_patch_reload: bool
    layers: list
    flash: FlashModel = field(default_factory=FlashModel)

    @property
    def pairs(self):
        return [(l.prep_us, l.fwd_us) for l in self.layers]

    @property
    def prep_total(self):
        return sum(l.prep_us for l in self.layers)

    @property
    def fwd_total(self):
        return sum(l.fwd_us for l in self.layers)

    def timeline(self, threads):
        return simulate(self.pairs, threads, [l.index for l in self.layers])

    @property
    def single_total(self):
        return self.timeline(1).total

    @property
    def multi_total(self):
        return self.timeline(2).total

    def to_dict(self):
        single, multi = self.single_total, self.multi_total
        return {
            "note": "simulated, calibrated",
            "units": "ms",
            "mode": self.mode,
            "parameter_residency": "reload per patch" if self.per_patch_reload else "hold per layer",
            "flash": asdict(self.flash),
            "layers": [dict(asdict(l), prep_ms=l.prep_us / 1e3, fwd_ms=l.fwd_us / 1e3) for l in self.layers],
            "prep_ms": self.prep_total / 1e3,
            "fwd_ms": self.fwd_total / 1e3,
            "single_ms": single / 1e3,
            "multi_ms": multi / 1e3,
            "saving": savings(single, multi),
        }


def savings(single, multi):
    return (single - multi) / single if single else 0.0


def profile_model(model, mode="naive", flash=FlashModel(), per_patch_reload=False):
    """Per-layer prep and fwd times for ``model`` executed under ``mode``.

    Layers with neither parameters nor MACs (relu, pooling) are dropped.
    """
    if isinstance(mode, str):
        mode = ExecMode.parse(mode)
    patched = mode.patched and last_producer(model) is not None
    if patched:
        plan = plan_patches(model, mode.m)
        macs = patched_layer_macs(model, plan)
        trunk = plan.end
    else:
        macs = count_macs(model)
        trunk = 0
    rows = []
    for i, layer in enumerate(model.layers):
        nbytes = layer.param_bytes
        loads = mode.m if patched and per_patch_reload and i < trunk else 1
        prep = loads * layer_prep(nbytes, flash)
        fwd = macs[i] * flash.mac_time_us
        if mode.in_place and isinstance(layer, DepthwiseConv):
            fwd += model.shapes[i + 1].element_count * BYTES_PER_ELEMENT * flash.copy_us_per_byte
        if prep == 0 and fwd == 0:
            continue
        rows.append(LayerTiming(i, layer.kind, nbytes, loads * pages(nbytes, flash.page_size), macs[i], prep, fwd))
    return LatencyProfile(str(mode), per_patch_reload, rows, flash)


def calibrate(model, prep_ms, fwd_ms, page_size=8192, t_read_us=25.0):
    """(mac_time_us, decode_us_per_byte) reproducing the given totals for a naive run of ``model``."""
    total_macs = sum(count_macs(model))
    nbytes = [l.param_bytes for l in model.layers]
    read = sum(pages(b, page_size) for b in nbytes) * t_read_us
    return fwd_ms * 1e3 / total_macs, (prep_ms * 1e3 - read) / sum(nbytes)


# Reported single-thread measurements: data preparation, forward, single total, multi total (ms).
REPORTED_LATENCY = {
    "Yahoo": (56.19, 48.16, 110.77, 73.88),
    "SWaT(1)": (49.33, 31.45, 87.45, 65.64),
    "SWaT(2)": (29.33, 15.42, 52.01, 39.83),
    "SWaT(3)": (34.40, 35.70, 76.42, 47.12),
    "SKAB": (97.64, 12.14, 116.68, 97.64),
}


def uniform_profile(name, n_layers=5):
    """Evenly split one reported row over ``n_layers`` learned layers.

    Whatever the single-thread total has beyond prep + forward is
    unattributed work on the compute side, so it is added to forward.
    """
    prep, fwd, single, _multi = REPORTED_LATENCY[name]
    fwd_all = fwd + max(0.0, single - prep - fwd)
    return [(prep / n_layers, fwd_all / n_layers)] * n_layers
