"""Report figures: per-layer memory, latency Gantt charts, patch receptive fields."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from tinyad.audit import KB  # noqa: E402

MODE_COLORS = {"naive": "tab:gray", "inplace": "tab:blue", "patch": "tab:orange", "tinyad": "tab:green"}


def _color(mode):
    return MODE_COLORS.get(str(mode).split(":")[0], "tab:purple")


def memory_bars(audit, path):
    """Grouped bars of live arena bytes per layer, one group member per mode."""
    modes = list(audit.plans)
    n = len(audit.layers)
    width = 0.8 / max(len(modes), 1)
    fig, ax = plt.subplots(figsize=(max(6, n * 0.7), 3.6))
    x = np.arange(n)
    for j, mode in enumerate(modes):
        live = [l.live_bytes / KB for l in audit.plans[mode].layers]
        ax.bar(x + (j - (len(modes) - 1) / 2) * width, live, width, label=mode, color=_color(mode))
    ax.set_xticks(x)
    ax.set_xticklabels([f"{l.index}\n{l.kind}" for l in audit.layers], fontsize=7)
    ax.set_ylabel("live memory (kB, float32)")
    ax.legend(fontsize=8, frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def gantt(timelines, path):
    """Loader and compute spans, one row pair per timeline (ms on the x axis)."""
    fig, ax = plt.subplots(figsize=(8, 1.2 + 0.8 * len(timelines)))
    yticks, ylabels = [], []
    for row, (label, tl) in enumerate(timelines.items()):
        for k, resource in enumerate(("loader", "compute")):
            y = row * 3 + k
            spans = [(s.start / 1e3, (s.end - s.start) / 1e3) for s in tl.spans if s.resource == resource]
            ax.broken_barh(spans, (y - 0.4, 0.8), color="tab:blue" if resource == "loader" else "tab:red",
                           edgecolor="white", linewidth=0.5)
            yticks.append(y)
            ylabels.append(f"{label} {resource}")
    ax.set_yticks(yticks)
    ax.set_yticklabels(ylabels, fontsize=8)
    ax.set_xlabel("time (ms, simulated)")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def receptive_fields(plan, input_extent, path):
    """Each patch's receptive field on the model input along the split axis."""
    fig, ax = plt.subplots(figsize=(7, 0.8 + 0.4 * plan.m))
    for p, region in enumerate(plan.input_fields):
        lo, hi = region.ranges[plan.axis]
        ax.broken_barh([(lo, hi - lo)], (p - 0.35, 0.7), color=plt.cm.viridis(p / max(plan.m - 1, 1)), alpha=0.8)
        ax.text(hi, p, f" [{lo},{hi})", va="center", fontsize=7)
    ax.set_xlim(0, input_extent * 1.12)
    ax.set_yticks(range(plan.m))
    ax.set_yticklabels([f"patch {p}" for p in range(plan.m)], fontsize=8)
    ax.set_xlabel("input position (split axis)")
    ax.invert_yaxis()
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
