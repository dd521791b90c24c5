"""Pure-Python rasterizers operating on ``Component`` objects.

These follow the algorithms voxel by voxel with no compiled code, accept
any callable as a value function, and expose the nested-sweeps queues and
active sets to an observer. They are slow; use them on small grids.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .index import build_index, stab_query
from .model import (Component, CombineOp, VoxelGrid, aabb_contains, combine_all, linear_index,
                    to_scalar)


def _sampled(c: Component, p, scalar):
    return to_scalar(c.value_fn(*p), scalar)


def bruteforce_slices(components: Sequence[Component], grid: VoxelGrid, op: CombineOp):
    comps = sorted(components, key=lambda c: c.id)
    plane = np.empty(grid.shape[1:], dtype=grid.scalar.dtype)
    for z in range(grid.dz):
        for y in range(grid.dy):
            for x in range(grid.dx):
                p = (x, y, z)
                plane[y, x] = combine_all(
                    op, [_sampled(c, p, grid.scalar) for c in comps if aabb_contains(c.bbox, p)])
        yield z, plane


def spatial_index_slices(components: Sequence[Component], grid: VoxelGrid, op: CombineOp):
    by_id = {c.id: c for c in components}
    index = build_index(components)
    plane = np.empty(grid.shape[1:], dtype=grid.scalar.dtype)
    for z in range(grid.dz):
        for y in range(grid.dy):
            for x in range(grid.dx):
                p = (x, y, z)
                plane[y, x] = combine_all(
                    op, [_sampled(by_id[i], p, grid.scalar) for i in stab_query(index, p)])
        yield z, plane


def component_order(components: Sequence[Component], grid: VoxelGrid, op: CombineOp,
                    sort: bool = False) -> np.ndarray:
    buf = np.full(grid.size, op.identity, dtype=grid.scalar.dtype)
    comps = list(components)
    if sort:
        comps.sort(key=lambda c: (linear_index(c.bbox.lo, grid), c.id))
    for c in comps:
        for p in c.bbox.voxels():
            off = linear_index(p, grid)
            buf[off] = op.apply(float(buf[off]), _sampled(c, p, grid.scalar))
    return buf.reshape(grid.shape)


@dataclass(frozen=True)
class SweepState:
    """Queue and active-set membership (component ids) at one voxel of the nested sweeps."""

    p: tuple[int, int, int]
    queue_z: tuple[int, ...]
    active_z: tuple[int, ...]
    queue_y: tuple[int, ...]
    active_y: tuple[int, ...]
    queue_x: tuple[int, ...]
    active_x: tuple[int, ...]


def _ids(seq) -> tuple[int, ...]:
    return tuple(c.id for c in seq)


def nested_sweeps_slices(components: Sequence[Component], grid: VoxelGrid, op: CombineOp,
                         observer: Optional[Callable[[SweepState], None]] = None,
                         line_active: Optional[np.ndarray] = None,
                         ) -> Iterator[tuple[int, np.ndarray, int]]:
    """Yield ``(z, plane, |C_z|)`` per slice; ``line_active[z, y]`` receives ``|C_y|``."""
    scalar = grid.scalar
    queue_z = deque(sorted(components, key=lambda c: (c.bbox.lo_z, c.id)))
    active_z: list[Component] = []
    plane = np.empty(grid.shape[1:], dtype=scalar.dtype)
    for z in range(grid.dz):
        active_z = [c for c in active_z if c.bbox.hi_z >= z]
        while queue_z and queue_z[0].bbox.lo_z == z:
            active_z.append(queue_z.popleft())
        queue_y = deque(sorted(active_z, key=lambda c: (c.bbox.lo_y, c.id)))
        active_y: list[Component] = []
        for y in range(grid.dy):
            active_y = [c for c in active_y if c.bbox.hi_y >= y]
            while queue_y and queue_y[0].bbox.lo_y == y:
                active_y.append(queue_y.popleft())
            if line_active is not None:
                line_active[z, y] = len(active_y)
            queue_x = deque(sorted(active_y, key=lambda c: (c.bbox.lo_x, c.id)))
            active_x: list[Component] = []
            active_x_ids: list[int] = []
            for x in range(grid.dx):
                keep = [k for k, c in enumerate(active_x) if c.bbox.hi_x >= x]
                active_x = [active_x[k] for k in keep]
                active_x_ids = [active_x_ids[k] for k in keep]
                while queue_x and queue_x[0].bbox.lo_x == x:
                    c = queue_x.popleft()
                    k = bisect.bisect(active_x_ids, c.id)
                    active_x_ids.insert(k, c.id)
                    active_x.insert(k, c)
                p = (x, y, z)
                if observer is not None:
                    observer(SweepState(p, _ids(queue_z), _ids(active_z), _ids(queue_y),
                                        _ids(active_y), _ids(queue_x), tuple(active_x_ids)))
                plane[y, x] = combine_all(op, [_sampled(c, p, scalar) for c in active_x])
        yield z, plane, len(active_z)
