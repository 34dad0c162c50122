"""Memory-budgeted CNN inference toolchain for time-series anomaly detection."""

from tinyad.errors import (
    BudgetError,
    IngestionError,
    ParseError,
    PlanError,
    RangeError,
    ShapeError,
    SilentWindowError,
    StreamError,
    TinyADError,
    ValidationError,
    WindowError,
)
from tinyad.tensor import Region, Shape, Tensor, max_abs_diff, slice_region

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "IngestionError",
    "ParseError",
    "PlanError",
    "RangeError",
    "Region",
    "Shape",
    "ShapeError",
    "SilentWindowError",
    "StreamError",
    "Tensor",
    "TinyADError",
    "ValidationError",
    "WindowError",
    "max_abs_diff",
    "slice_region",
]
