"""The rasterizers: brute force, component order, spatial index, nested sweeps.

Every rasterizer computes, at each voxel, the combination of the values of
all components whose box contains it, folded in ascending component id
order. The streaming rasterizers produce whole z-slices internally and hand
them to a sink line by line in linear order; component-order rasterization
needs a random-access buffer and cannot stream.

Components whose value functions are the compiled kinds in ``functions``
run through numba kernels. Any other callable falls back to the pure-Python
implementations in ``reference``.
"""

from __future__ import annotations

import os
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kernels, reference
from .functions import PackedComponents, ValueFunction, pack_components, unpack_components
from .index import build_index
from .model import (Component, CombineOp, ContractError, SweepStats, VoxelGrid, slice_counts)
from .sinks import SinkSummary, VoxelSink

STREAMING_METHODS = ("bruteforce", "spatial-index", "nested-sweeps")
BUFFER_METHODS = ("component-order", "component-order-sorted")
METHODS = STREAMING_METHODS + BUFFER_METHODS

_EMPTY_I64 = np.zeros(0, dtype=np.int64)


def _compiled(components) -> bool:
    if isinstance(components, PackedComponents):
        return True
    return all(isinstance(c.value_fn, ValueFunction) for c in components)


def _check(grid: VoxelGrid, op: CombineOp):
    if op.scalar != grid.scalar:
        raise ContractError(f"combine op is over {op.scalar.value}, grid holds {grid.scalar.value}")


def _as_components(components) -> list[Component]:
    if isinstance(components, PackedComponents):
        return unpack_components(components)
    return list(components)


def _check_boxes(components: Sequence[Component], grid: VoxelGrid):
    for c in components:
        if not c.bbox.within(grid):
            raise ContractError(f"component {c.id} box {c.bbox} outside grid {grid.dims}")
    ids = [c.id for c in components]
    if len(set(ids)) != len(ids):
        raise ContractError("duplicate component ids")


def _kernel_args(grid: VoxelGrid, op: CombineOp):
    return op.code, grid.scalar.code, grid.scalar.max_value, op.identity


def _counts(packed: PackedComponents, count_evals: bool) -> np.ndarray:
    return np.zeros(len(packed), dtype=np.int64) if count_evals else _EMPTY_I64


def _stream(slices: Iterator, grid: VoxelGrid, sink: VoxelSink) -> SinkSummary:
    sink.begin(grid)
    accept = sink.accept_plane
    try:
        for z, plane in slices:
            accept(z, plane)
    except BaseException:
        sink.abort()
        raise
    return sink.finish()


# -- slice producers ------------------------------------------------------------

def bruteforce_slices(packed: PackedComponents, grid: VoxelGrid, op: CombineOp,
                      counts: np.ndarray = _EMPTY_I64):
    opc, sc, maxv, ident = _kernel_args(grid, op)
    plane = np.empty(grid.shape[1:], dtype=grid.scalar.dtype)
    for z in range(grid.dz):
        _kernels.bruteforce_slice(packed.boxes, packed.kinds, packed.params, z, plane,
                                  opc, sc, maxv, ident, counts)
        yield z, plane


def spatial_index_slices(packed: PackedComponents, grid: VoxelGrid, op: CombineOp,
                         counts: np.ndarray = _EMPTY_I64, index=None):
    opc, sc, maxv, ident = _kernel_args(grid, op)
    index = index if index is not None else build_index(packed)
    result, stack = index.scratch()
    plane = np.empty(grid.shape[1:], dtype=grid.scalar.dtype)
    for z in range(grid.dz):
        _kernels.spatial_slice(index.node_box, index.node_start, index.node_count, index.node_leaf,
                               index.child, index.root, packed.boxes, packed.kinds, packed.params,
                               z, plane, opc, sc, maxv, ident, counts, result, stack)
        yield z, plane


class NestedSweeps:
    """Slice-by-slice nested sweeps over packed components.

    The z sweep runs here (Q_z sorted by (lo_z, id), C_z compacted then
    extended by popping every queued component starting at the current
    slice); the y and x sweeps of each slice run in ``_kernels.sweep_slice``.
    """

    def __init__(self, packed: PackedComponents, grid: VoxelGrid, op: CombineOp,
                 collect_stats: bool = False, count_evals: bool = False, trace: bool = False):
        self.packed = packed
        self.grid = grid
        self.op = op
        n = len(packed)
        self.per_slice_active = np.zeros(grid.dz, dtype=np.int64)
        self.per_line_active = (np.zeros((grid.dz, grid.dy), dtype=np.int64)
                                if collect_stats else None)
        self.counts = _counts(packed, count_evals)
        if trace:
            cap = int(packed.volumes.sum()) if n else 0
            self.trace_vox = np.empty(max(cap, 1), dtype=np.int64)
            self.trace_comp = np.empty(max(cap, 1), dtype=np.int64)
        else:
            self.trace_vox = self.trace_comp = _EMPTY_I64
        self.trace_n = np.zeros(1, dtype=np.int64)

    def slices(self):
        packed, grid = self.packed, self.grid
        opc, sc, maxv, ident = _kernel_args(grid, self.op)
        boxes = packed.boxes
        n = len(packed)
        rows = np.arange(n, dtype=np.int64)
        queue_z = rows[np.lexsort((rows, boxes[:, 2]))] if n else rows
        queue_lo = boxes[queue_z, 2] if n else rows
        hi_z = boxes[:, 5] if n else rows
        pos = 0
        active_z = _EMPTY_I64
        plane = np.empty(grid.shape[1:], dtype=grid.scalar.dtype)
        for z in range(grid.dz):
            if len(active_z):
                active_z = active_z[hi_z[active_z] >= z]
            end = int(np.searchsorted(queue_lo, z, side="right"))
            if end > pos:
                active_z = np.sort(np.concatenate((active_z, queue_z[pos:end])))
                pos = end
            self.per_slice_active[z] = len(active_z)
            if len(active_z) == 0:
                plane.fill(ident)
            else:
                line = self.per_line_active[z] if self.per_line_active is not None else _EMPTY_I64
                _kernels.sweep_slice(boxes, packed.kinds, packed.params, active_z, z, plane,
                                     opc, sc, maxv, ident, self.counts, line,
                                     self.trace_vox, self.trace_comp, self.trace_n)
            yield z, plane

    def stats(self) -> SweepStats:
        st = SweepStats(self.per_slice_active, self.per_line_active, component_ids=self.packed.ids)
        if len(self.counts):
            st.eval_counts = self.counts
        if len(self.trace_vox):
            k = int(self.trace_n[0])
            st.trace_voxel = self.trace_vox[:k]
            st.trace_component = self.packed.ids[self.trace_comp[:k]]
        return st


# -- public rasterizers -----------------------------------------------------------

def rasterize_bruteforce(components, grid: VoxelGrid, op: CombineOp, sink: VoxelSink,
                         count_evals: bool = False) -> SweepStats:
    """Linear scan over all components at every voxel: the correctness oracle."""
    _check(grid, op)
    if not _compiled(components):
        comps = _as_components(components)
        _check_boxes(comps, grid)
        summary = _stream(reference.bruteforce_slices(comps, grid, op), grid, sink)
        boxes = np.array([c.bbox.lo + c.bbox.hi for c in comps], dtype=np.int64).reshape(-1, 6)
        return SweepStats(slice_counts(boxes, grid.dz), sink_summary=summary)
    packed = pack_components(components, grid)
    counts = _counts(packed, count_evals)
    summary = _stream(bruteforce_slices(packed, grid, op, counts), grid, sink)
    return SweepStats(slice_counts(packed.boxes, grid.dz), component_ids=packed.ids,
                      eval_counts=counts if count_evals else None, sink_summary=summary)


def rasterize_spatial_index(components, grid: VoxelGrid, op: CombineOp, sink: VoxelSink,
                            count_evals: bool = False) -> SweepStats:
    """Voxel-order rasterization with one R-tree stabbing query per voxel."""
    _check(grid, op)
    if not _compiled(components):
        comps = _as_components(components)
        _check_boxes(comps, grid)
        summary = _stream(reference.spatial_index_slices(comps, grid, op), grid, sink)
        boxes = np.array([c.bbox.lo + c.bbox.hi for c in comps], dtype=np.int64).reshape(-1, 6)
        return SweepStats(slice_counts(boxes, grid.dz), sink_summary=summary)
    packed = pack_components(components, grid)
    counts = _counts(packed, count_evals)
    summary = _stream(spatial_index_slices(packed, grid, op, counts), grid, sink)
    return SweepStats(slice_counts(packed.boxes, grid.dz), component_ids=packed.ids,
                      eval_counts=counts if count_evals else None, sink_summary=summary)


def rasterize_nested_sweeps(components, grid: VoxelGrid, op: CombineOp, sink: VoxelSink,
                            collect_stats: bool = False, count_evals: bool = False,
                            trace: bool = False) -> SweepStats:
    """Nested plane/line/point sweeps streaming voxels in linear order.

    ``collect_stats`` records |C_y| per line; ``count_evals`` counts value
    function evaluations per component; ``trace`` records every
    (voxel, component) pair sampled, i.e. C_x at each voxel.
    """
    _check(grid, op)
    if not _compiled(components):
        comps = _as_components(components)
        _check_boxes(comps, grid)
        line = np.zeros((grid.dz, grid.dy), dtype=np.int64) if collect_stats else None
        per_slice = np.zeros(grid.dz, dtype=np.int64)

        def slices():
            for z, plane, n_active in reference.nested_sweeps_slices(comps, grid, op,
                                                                     line_active=line):
                per_slice[z] = n_active
                yield z, plane

        summary = _stream(slices(), grid, sink)
        return SweepStats(per_slice, line, sink_summary=summary)
    packed = pack_components(components, grid)
    sweeps = NestedSweeps(packed, grid, op, collect_stats, count_evals, trace)
    summary = _stream(sweeps.slices(), grid, sink)
    st = sweeps.stats()
    st.sink_summary = summary
    return st


def allocate_buffer(grid: VoxelGrid, path: str | os.PathLike | None = None) -> np.ndarray:
    """A (dz, dy, dx) volume buffer in memory, or memory-mapped onto ``path``."""
    if path is None:
        return np.empty(grid.shape, dtype=grid.scalar.dtype)
    return np.memmap(path, dtype=grid.scalar.dtype, mode="w+", shape=grid.shape)


def component_order_rows(packed: PackedComponents, grid: VoxelGrid, sorted: bool,
                         input_ids: Optional[np.ndarray] = None) -> np.ndarray:
    rows = (np.searchsorted(packed.ids, input_ids) if input_ids is not None
            else np.arange(len(packed), dtype=np.int64))
    if sorted and len(rows):
        b = packed.boxes[rows]
        key = (b[:, 2] * grid.dy + b[:, 1]) * grid.dx + b[:, 0]
        rows = rows[np.lexsort((packed.ids[rows], key))]
    return np.ascontiguousarray(rows, dtype=np.int64)


def rasterize_component_order(components, grid: VoxelGrid, op: CombineOp,
                              buffer: np.ndarray | None = None, sorted: bool = False,
                              count_evals: bool = False, stats: SweepStats | None = None
                              ) -> np.ndarray:
    """Fill ``buffer`` with the identity, then write every component's box into it.

    Components are processed in input order, or by the linear index of
    their low corner when ``sorted``. Returns the (dz, dy, dx) buffer;
    memory-mapped buffers are flushed.
    """
    _check(grid, op)
    if buffer is None:
        buffer = allocate_buffer(grid)
    if buffer.size != grid.size or buffer.dtype != grid.scalar.dtype:
        raise ContractError(f"buffer of {buffer.size} {buffer.dtype} does not fit grid {grid}")
    if not _compiled(components):
        comps = _as_components(components)
        _check_boxes(comps, grid)
        buffer.reshape(grid.shape)[...] = reference.component_order(comps, grid, op, sort=sorted)
    else:
        packed = pack_components(components, grid)
        input_ids = None if isinstance(components, PackedComponents) else \
            np.array([c.id for c in components], dtype=np.int64)
        rows = component_order_rows(packed, grid, sorted, input_ids)
        counts = _counts(packed, count_evals)
        flat = np.asarray(buffer).reshape(-1)
        flat.fill(op.identity)
        opc, sc, maxv, _ = _kernel_args(grid, op)
        _kernels.component_order(packed.boxes, packed.kinds, packed.params, rows, flat,
                                 grid.dx, grid.dy, opc, sc, maxv, counts)
        if stats is not None and count_evals:
            stats.eval_counts = counts
            stats.component_ids = packed.ids
    if isinstance(buffer, np.memmap):
        buffer.flush()
    return buffer.reshape(grid.shape)


def rasterize(method: str, components, grid: VoxelGrid, op: CombineOp, sink: VoxelSink,
              buffer_path: str | os.PathLike | None = None) -> SweepStats:
    """Run any method and stream its result into ``sink``.

    Component-order methods rasterize into a buffer first (memory-mapped
    onto ``buffer_path`` if given) and then replay it line by line.
    """
    if method == "bruteforce":
        return rasterize_bruteforce(components, grid, op, sink)
    if method == "spatial-index":
        return rasterize_spatial_index(components, grid, op, sink)
    if method == "nested-sweeps":
        return rasterize_nested_sweeps(components, grid, op, sink)
    if method in BUFFER_METHODS:
        buf = allocate_buffer(grid, buffer_path)
        vol = rasterize_component_order(components, grid, op, buf,
                                        sorted=method == "component-order-sorted")
        summary = _stream(((z, vol[z]) for z in range(grid.dz)), grid, sink)
        boxes = pack_components(components).boxes if _compiled(components) else \
            np.array([c.bbox.lo + c.bbox.hi for c in components], dtype=np.int64).reshape(-1, 6)
        return SweepStats(slice_counts(boxes, grid.dz), sink_summary=summary)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
