"""Memory-mode execution: naive, in-place depthwise, patch-by-patch, and both combined."""

from tinyad.scheduler.arena import ArenaModel
from tinyad.scheduler.executor import (
    INPLACE,
    NAIVE,
    ExecMode,
    ExecResult,
    PatchOnly,
    TinyAD,
    execute,
    inplace_depthwise,
)
from tinyad.scheduler.patches import PatchPlan, last_producer, plan_patches, stitch_outputs, trunk_end

__all__ = [
    "ArenaModel",
    "ExecMode",
    "ExecResult",
    "INPLACE",
    "NAIVE",
    "PatchOnly",
    "PatchPlan",
    "TinyAD",
    "execute",
    "inplace_depthwise",
    "last_producer",
    "plan_patches",
    "stitch_outputs",
    "trunk_end",
]
