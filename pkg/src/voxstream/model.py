"""Grid, bounding box, component and combine-operator data model.

Coordinates are 0-based: a grid of extent ``d`` along an axis holds voxels
``0 .. d-1``. Bounding boxes are inclusive on both ends. Voxels are
linearized in z-y-x order (x fastest).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

UINT64_MAX = 2**64 - 1


class ContractError(ValueError):
    """Raised when an operation is called outside its precondition."""


class ScalarType(enum.Enum):
    U8 = "uint8"
    U32 = "uint32"
    F32 = "float32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value).newbyteorder("<")

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    @property
    def code(self) -> int:
        return _SCALAR_CODES[self]

    @property
    def is_float(self) -> bool:
        return self is ScalarType.F32

    @property
    def max_value(self) -> float:
        if self.is_float:
            return float(np.finfo(np.float32).max)
        return float(np.iinfo(self.value).max)

    @property
    def min_value(self) -> float:
        if self.is_float:
            return float(np.finfo(np.float32).min)
        return 0.0

    @classmethod
    def parse(cls, text: str | "ScalarType") -> "ScalarType":
        if isinstance(text, ScalarType):
            return text
        aliases = {"u8": cls.U8, "uint8": cls.U8, "u32": cls.U32,
                   "uint32": cls.U32, "f32": cls.F32, "float32": cls.F32}
        try:
            return aliases[text.lower()]
        except KeyError:
            raise ValueError(f"unknown scalar type {text!r}") from None


_SCALAR_CODES = {ScalarType.U8: 0, ScalarType.U32: 1, ScalarType.F32: 2}


def to_scalar(raw: float, scalar: ScalarType) -> float:
    """Convert a raw value-function result to a value of ``scalar``.

    Integers round half up and saturate at the type range; float32 rounds to
    nearest. The result is returned as a Python float holding the exact
    representable value.
    """
    if scalar.is_float:
        return float(np.float32(raw))
    v = math.floor(raw + 0.5)
    if v < 0:
        return 0.0
    if v > scalar.max_value:
        return scalar.max_value
    return float(v)


@dataclass(frozen=True)
class VoxelGrid:
    dx: int
    dy: int
    dz: int
    scalar: ScalarType = ScalarType.U8

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ContractError(f"grid extent {name}={v!r} must be a positive integer")
            object.__setattr__(self, name, int(v))
        object.__setattr__(self, "scalar", ScalarType.parse(self.scalar))
        if self.dx * self.dy * self.dz > UINT64_MAX:
            raise ContractError("voxel count overflows 64-bit arithmetic")

    @property
    def size(self) -> int:
        return self.dx * self.dy * self.dz

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape in storage order (z, y, x)."""
        return (self.dz, self.dy, self.dx)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.dx, self.dy, self.dz)

    @property
    def nbytes(self) -> int:
        return self.size * self.scalar.itemsize

    def with_scalar(self, scalar: ScalarType | str) -> "VoxelGrid":
        return VoxelGrid(self.dx, self.dy, self.dz, ScalarType.parse(scalar))

    def full_box(self) -> "Aabb":
        return Aabb(0, 0, 0, self.dx - 1, self.dy - 1, self.dz - 1)


@dataclass(frozen=True)
class Aabb:
    lo_x: int
    lo_y: int
    lo_z: int
    hi_x: int
    hi_y: int
    hi_z: int

    def __post_init__(self):
        for lo, hi in zip(self.lo, self.hi):
            if lo > hi:
                raise ContractError(f"invalid box: lo {self.lo} exceeds hi {self.hi}")

    @classmethod
    def from_corners(cls, lo: Sequence[int], hi: Sequence[int]) -> "Aabb":
        return cls(int(lo[0]), int(lo[1]), int(lo[2]), int(hi[0]), int(hi[1]), int(hi[2]))

    @property
    def lo(self) -> tuple[int, int, int]:
        return (self.lo_x, self.lo_y, self.lo_z)

    @property
    def hi(self) -> tuple[int, int, int]:
        return (self.hi_x, self.hi_y, self.hi_z)

    @property
    def sides(self) -> tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    def within(self, grid: VoxelGrid) -> bool:
        return all(l >= 0 for l in self.lo) and all(h < d for h, d in zip(self.hi, grid.dims))

    def voxels(self) -> Iterable[tuple[int, int, int]]:
        """Every voxel of the box in linear (z-y-x) order."""
        for z in range(self.lo_z, self.hi_z + 1):
            for y in range(self.lo_y, self.hi_y + 1):
                for x in range(self.lo_x, self.hi_x + 1):
                    yield (x, y, z)


@dataclass(frozen=True)
class Component:
    """A bounding box and the value function sampled inside it.

    ``value_fn`` is called with ``(x, y, z)`` and must be pure. Rasterizers
    only evaluate it at voxels inside ``bbox``.
    """

    id: int
    bbox: Aabb
    value_fn: Callable[[int, int, int], float]

    def __post_init__(self):
        if int(self.id) != self.id or self.id < 0:
            raise ContractError(f"component id must be a non-negative integer, got {self.id!r}")


@dataclass(frozen=True)
class CombineOp:
    """Associative binary operation with identity over one scalar type.

    Integer sums saturate at the type maximum. Float32 operations round to
    float32 after every step.
    """

    name: str
    scalar: ScalarType
    identity: float

    @classmethod
    def sum(cls, scalar: ScalarType | str = ScalarType.U8) -> "CombineOp":
        return cls("sum", ScalarType.parse(scalar), 0.0)

    @classmethod
    def max(cls, scalar: ScalarType | str = ScalarType.U8) -> "CombineOp":
        scalar = ScalarType.parse(scalar)
        return cls("max", scalar, -math.inf if scalar.is_float else 0.0)

    @classmethod
    def parse(cls, name: str, scalar: ScalarType | str) -> "CombineOp":
        if name == "sum":
            return cls.sum(scalar)
        if name == "max":
            return cls.max(scalar)
        raise ValueError(f"unknown combine op {name!r}")

    @property
    def code(self) -> int:
        return 0 if self.name == "sum" else 1

    def apply(self, a: float, b: float) -> float:
        if self.name == "sum":
            if self.scalar.is_float:
                return float(np.float32(np.float32(a) + np.float32(b)))
            return min(a + b, self.scalar.max_value)
        return max(a, b)


@dataclass
class SweepStats:
    """Active-component counts observed during a rasterization.

    ``per_slice_active[z]`` is the number of boxes intersecting slice z.
    ``per_line_active[z, y]`` (nested sweeps with stats enabled) is the
    number of boxes intersecting line (z, y). ``eval_counts`` and the
    ``trace_*`` arrays are filled only by instrumented runs.
    """

    per_slice_active: np.ndarray
    per_line_active: Optional[np.ndarray] = None
    eval_counts: Optional[np.ndarray] = None
    component_ids: Optional[np.ndarray] = None
    trace_voxel: Optional[np.ndarray] = None
    trace_component: Optional[np.ndarray] = None
    sink_summary: Any = field(default=None, repr=False)


def linear_index(p: Sequence[int], grid: VoxelGrid) -> int:
    x, y, z = p
    if not (0 <= x < grid.dx and 0 <= y < grid.dy and 0 <= z < grid.dz):
        raise ContractError(f"voxel {tuple(p)} outside grid {grid.dims}")
    return (z * grid.dy + y) * grid.dx + x


def aabb_contains(box: Aabb, p: Sequence[int]) -> bool:
    x, y, z = p
    return (box.lo_x <= x <= box.hi_x and box.lo_y <= y <= box.hi_y
            and box.lo_z <= z <= box.hi_z)


def aabb_volume(box: Aabb) -> int:
    sx, sy, sz = box.sides
    vol = sx * sy * sz
    if vol > UINT64_MAX:
        raise OverflowError(f"box volume {vol} overflows 64-bit arithmetic")
    return vol


def combine_all(op: CombineOp, values: Iterable[float]) -> float:
    acc = op.identity
    for v in values:
        acc = op.apply(acc, v)
    return acc


def slice_counts(boxes: np.ndarray, dz: int) -> np.ndarray:
    """Number of boxes intersecting each z-slice, from an ``(n, 6)`` box array."""
    diff = np.zeros(dz + 1, dtype=np.int64)
    if len(boxes):
        np.add.at(diff, boxes[:, 2], 1)
        np.add.at(diff, boxes[:, 5] + 1, -1)
    return np.cumsum(diff[:-1])
