"""Value functions that components sample inside their bounding boxes.

Each function is a small frozen dataclass with a ``kind`` code and a flat
parameter vector, so the compiled rasterization kernels can evaluate it
without calling back into Python. Calling the object directly evaluates
the same formula in Python.

The scalar formulas below are plain functions; ``_kernels`` compiles the
very same functions with numba, so both routes share one definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Aabb, Component, ContractError, VoxelGrid

KIND_CONSTANT = 0
KIND_RAMP = 1
KIND_CAPSULE = 2
KIND_SHADOW = 3

N_PARAMS = 10


def constant_value(value):
    return value


def ramp_value(offset, gx, gy, gz, x, y, z):
    return offset + gx * x + gy * y + gz * z


def segment_distance_sq(px, py, pz, sx, sy, sz, ex, ey, ez):
    """Squared distance from point p to the closed segment [s, e]."""
    ax = ex - sx
    ay = ey - sy
    az = ez - sz
    wx = px - sx
    wy = py - sy
    wz = pz - sz
    len2 = ax * ax + ay * ay + az * az
    t = 0.0
    if len2 > 0.0:
        t = (wx * ax + wy * ay + wz * az) / len2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = wx - t * ax
    qy = wy - t * ay
    qz = wz - t * az
    return qx * qx + qy * qy + qz * qz


def capsule_value(px, py, pz, sx, sy, sz, ex, ey, ez, radius, inside, outside):
    if segment_distance_sq(px, py, pz, sx, sy, sz, ex, ey, ez) <= radius * radius:
        return inside
    return outside


def shadow_value(px, py, pz, cx, cy, cz, r, strength):
    dx = px - cx
    dy = py - cy
    dz = pz - cz
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d >= r:
        return 0.0
    return -strength * (r - d)


class ValueFunction:
    kind: int

    def params(self) -> tuple[float, ...]:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ValueFunction):
    value: float
    kind = KIND_CONSTANT

    def __call__(self, x, y, z):
        return constant_value(self.value)

    def params(self):
        return (float(self.value),)


@dataclass(frozen=True)
class Ramp(ValueFunction):
    """Affine function of the voxel coordinate; used to exercise position-dependent values."""

    offset: float
    gx: float = 0.0
    gy: float = 0.0
    gz: float = 0.0
    kind = KIND_RAMP

    def __call__(self, x, y, z):
        return ramp_value(self.offset, self.gx, self.gy, self.gz, x, y, z)

    def params(self):
        return (self.offset, self.gx, self.gy, self.gz)


@dataclass(frozen=True)
class Capsule(ValueFunction):
    """``inside`` within ``radius`` of the segment [start, end], ``outside`` elsewhere.

    A capsule is the union of the cylinder between the cap planes and the
    two end spheres, which is exactly the set of points within ``radius``
    of the segment.
    """

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius: float
    inside: float = 1.0
    outside: float = 0.0
    kind = KIND_CAPSULE

    def __call__(self, x, y, z):
        return capsule_value(x, y, z, *self.start, *self.end, self.radius,
                             self.inside, self.outside)

    def params(self):
        return (*map(float, self.start), *map(float, self.end), float(self.radius),
                float(self.inside), float(self.outside))


@dataclass(frozen=True)
class SphericalShadow(ValueFunction):
    """Signal reduction ``-strength * max(0, r - |p - center|)``."""

    center: tuple[float, float, float]
    r: float
    strength: float = 1.0
    kind = KIND_SHADOW

    def __call__(self, x, y, z):
        return shadow_value(x, y, z, *self.center, self.r, self.strength)

    def params(self):
        return (*map(float, self.center), float(self.r), float(self.strength))


def constant_component(id: int, lo: Sequence[int], hi: Sequence[int], value: float) -> Component:
    return Component(id, Aabb.from_corners(lo, hi), Constant(value))


@dataclass(frozen=True)
class PackedComponents:
    """Struct-of-arrays form of a component collection, sorted by id.

    Row ``i`` of every array describes the component with the i-th smallest
    id, so index order is the canonical aggregation order.
    """

    ids: np.ndarray      # int64 (n,)
    boxes: np.ndarray    # int64 (n, 6): lo_x lo_y lo_z hi_x hi_y hi_z
    kinds: np.ndarray    # int64 (n,)
    params: np.ndarray   # float64 (n, N_PARAMS)

    def __len__(self):
        return len(self.ids)

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.boxes[:, 3:] - self.boxes[:, :3] + 1, axis=1)


def pack_components(components: Sequence[Component], grid: VoxelGrid | None = None) -> PackedComponents:
    if isinstance(components, PackedComponents):
        packed = components
    else:
        comps = sorted(components, key=lambda c: c.id)
        n = len(comps)
        ids = np.fromiter((c.id for c in comps), dtype=np.int64, count=n)
        if n > 1 and np.any(ids[1:] == ids[:-1]):
            dup = int(ids[1:][ids[1:] == ids[:-1]][0])
            raise ContractError(f"duplicate component id {dup}")
        boxes = np.array([c.bbox.lo + c.bbox.hi for c in comps], dtype=np.int64).reshape(n, 6)
        kinds = np.empty(n, dtype=np.int64)
        params = np.zeros((n, N_PARAMS), dtype=np.float64)
        for i, c in enumerate(comps):
            fn = c.value_fn
            if not isinstance(fn, ValueFunction):
                raise TypeError(
                    f"component {c.id}: value_fn must be one of the compiled value "
                    f"function kinds (Constant, Ramp, Capsule, SphericalShadow), got {type(fn).__name__}")
            kinds[i] = fn.kind
            p = fn.params()
            params[i, :len(p)] = p
        packed = PackedComponents(ids, boxes, kinds, params)
    if grid is not None and len(packed):
        b = packed.boxes
        if (b[:, :3] < 0).any() or (b[:, 3] >= grid.dx).any() or (b[:, 4] >= grid.dy).any() \
                or (b[:, 5] >= grid.dz).any():
            raise ContractError(f"component box outside grid {grid.dims}")
    return packed


def unpack_components(packed: PackedComponents) -> list[Component]:
    out = []
    for i in range(len(packed)):
        box = Aabb.from_corners(packed.boxes[i, :3], packed.boxes[i, 3:])
        p = packed.params[i]
        kind = packed.kinds[i]
        if kind == KIND_CONSTANT:
            fn = Constant(float(p[0]))
        elif kind == KIND_RAMP:
            fn = Ramp(*map(float, p[:4]))
        elif kind == KIND_CAPSULE:
            fn = Capsule(tuple(p[0:3]), tuple(p[3:6]), float(p[6]), float(p[7]), float(p[8]))
        else:
            fn = SphericalShadow(tuple(p[0:3]), float(p[3]), float(p[4]))
        out.append(Component(int(packed.ids[i]), box, fn))
    return out
