"""Dense float32 tensors with channel-major layout.

A tensor always has one channel axis followed by one or two spatial axes.
Data is stored as a C-ordered numpy array of shape ``(channels, *spatial)``,
so flattening walks every position of channel 0 before channel 1.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from tinyad.errors import RangeError, ShapeError

BYTES_PER_ELEMENT = 4


@dataclass(frozen=True)
class Shape:
    channels: int
    spatial: tuple

    def __post_init__(self):
        spatial = tuple(int(s) for s in self.spatial)
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "channels", int(self.channels))
        if self.channels < 1:
            raise ShapeError(f"channel count must be positive, got {self.channels}")
        if len(spatial) not in (1, 2):
            raise ShapeError(f"spatial rank must be 1 or 2, got {len(spatial)}")
        if any(s < 1 for s in spatial):
            raise ShapeError(f"spatial extents must be positive, got {spatial}")

    @classmethod
    def from_list(cls, dims):
        dims = list(dims)
        if len(dims) < 2:
            raise ShapeError(f"shape needs channels plus 1 or 2 spatial extents, got {dims}")
        return cls(dims[0], tuple(dims[1:]))

    def as_list(self):
        return [self.channels, *self.spatial]

    @property
    def rank(self):
        return len(self.spatial)

    @property
    def plane_size(self):
        """Elements in one channel plane."""
        return prod(self.spatial)

    @property
    def element_count(self):
        return self.channels * self.plane_size

    @property
    def nbytes(self):
        return self.element_count * BYTES_PER_ELEMENT

    def __str__(self):
        return "[" + ",".join(str(d) for d in self.as_list()) + "]"


@dataclass(frozen=True)
class Region:
    """Half-open ``[lo, hi)`` ranges, one per spatial axis."""

    ranges: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranges", tuple((int(lo), int(hi)) for lo, hi in self.ranges))

    @classmethod
    def full(cls, shape):
        return cls(tuple((0, s) for s in shape.spatial))

    @property
    def extents(self):
        return tuple(hi - lo for lo, hi in self.ranges)

    def validate(self, shape):
        if len(self.ranges) != shape.rank:
            raise RangeError(f"region rank {len(self.ranges)} does not match tensor rank {shape.rank}")
        for axis, ((lo, hi), extent) in enumerate(zip(self.ranges, shape.spatial)):
            if not 0 <= lo < hi <= extent:
                raise RangeError(f"region [{lo},{hi}) invalid on axis {axis} of extent {extent}")

    def compose(self, inner):
        """Region ``inner`` expressed in this region's coordinates, mapped back to the parent."""
        return Region(tuple((lo + a, lo + b) for (lo, _), (a, b) in zip(self.ranges, inner.ranges)))

    def intersect(self, other):
        return Region(tuple((max(a, c), min(b, d)) for (a, b), (c, d) in zip(self.ranges, other.ranges)))

    def __str__(self):
        return "x".join(f"[{lo},{hi})" for lo, hi in self.ranges)


class Tensor:
    """Immutable channel-major float32 tensor."""

    __slots__ = ("shape", "_data")

    def __init__(self, shape, data):
        if not isinstance(shape, Shape):
            shape = Shape.from_list(shape)
        arr = np.asarray(data, dtype=np.float32)
        if arr.size != shape.element_count:
            raise ShapeError(f"data has {arr.size} elements, shape {shape} needs {shape.element_count}")
        arr = np.ascontiguousarray(arr.reshape(shape.channels, *shape.spatial))
        arr.flags.writeable = False
        self.shape = shape
        self._data = arr

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float32)
        return cls(Shape(arr.shape[0], arr.shape[1:]), arr)

    @property
    def array(self):
        """Read-only ``(channels, *spatial)`` view."""
        return self._data

    def flatten(self):
        return self._data.reshape(-1).copy()

    def coordinates(self):
        """(channel, spatial index) for every flat position, in storage order."""
        return [(int(c), tuple(int(i) for i in rest)) for c, *rest in np.ndindex(self._data.shape)]

    def __eq__(self, other):
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and np.array_equal(self._data, other._data)
        )

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def slice_region(t, region):
    """Copy of ``t`` restricted to ``region`` on every channel."""
    region.validate(t.shape)
    index = (slice(None),) + tuple(slice(lo, hi) for lo, hi in region.ranges)
    return Tensor.from_array(t.array[index].copy())


def max_abs_diff(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape.element_count == 0:
        return 0.0
    return float(np.max(np.abs(a.array.astype(np.float64) - b.array.astype(np.float64))))
