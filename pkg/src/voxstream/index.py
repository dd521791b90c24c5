"""Bulk-loaded R-tree over component bounding boxes for point stabbing queries.

Leaves are packed with sort-tile-recursive (STR) ordering: entries are
sorted by box center along x, cut into slabs, each slab sorted along y and
cut into runs, each run sorted along z and cut into nodes of at most
``fanout`` entries. Upper levels are packed the same way over the child
node boxes until one root remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .functions import PackedComponents
from .model import Aabb, Component, ContractError

DEFAULT_FANOUT = 16


def _str_groups(boxes: np.ndarray, fanout: int) -> list[np.ndarray]:
    n = len(boxes)
    centers = boxes[:, :3] + boxes[:, 3:]  # doubled centers; integer and order-preserving
    n_nodes = math.ceil(n / fanout)
    n_slabs = math.ceil(n_nodes ** (1 / 3))
    idx = np.arange(n)
    groups = []
    by_x = idx[np.lexsort((idx, centers[:, 0]))]
    slab_size = math.ceil(n / n_slabs)
    for s in range(0, n, slab_size):
        slab = by_x[s:s + slab_size]
        n_runs = math.ceil(math.sqrt(math.ceil(len(slab) / fanout)))
        run_size = math.ceil(len(slab) / n_runs)
        by_y = slab[np.lexsort((slab, centers[slab, 1]))]
        for r in range(0, len(slab), run_size):
            run = by_y[r:r + run_size]
            by_z = run[np.lexsort((run, centers[run, 2]))]
            for g in range(0, len(run), fanout):
                groups.append(by_z[g:g + fanout])
    return groups


@dataclass(frozen=True)
class BoxIndex:
    """Immutable R-tree. Entries are rows of ``entry_box``; ``entry_ids`` maps rows to ids."""

    entry_box: np.ndarray
    entry_ids: np.ndarray
    node_box: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    node_leaf: np.ndarray
    child: np.ndarray
    root: int
    height: int

    def __len__(self):
        return len(self.entry_ids)

    def scratch(self) -> tuple[np.ndarray, np.ndarray]:
        """Result and traversal-stack buffers large enough for any query."""
        result = np.empty(max(len(self), 1), dtype=np.int64)
        stack = np.empty(max(len(self.node_count), 1), dtype=np.int64)
        return result, stack

    def query_rows(self, p: Sequence[int], scratch=None) -> np.ndarray:
        result, stack = scratch or self.scratch()
        k = _kernels.rtree_query(self.node_box, self.node_start, self.node_count, self.node_leaf,
                                 self.child, self.entry_box, self.root,
                                 int(p[0]), int(p[1]), int(p[2]), result, stack)
        return result[:k].copy()


def _build(boxes: np.ndarray, ids: np.ndarray, fanout: int) -> BoxIndex:
    if fanout < 2:
        raise ValueError("fanout must be at least 2")
    n = len(boxes)
    node_box: list[np.ndarray] = []
    node_start: list[int] = []
    node_count: list[int] = []
    node_leaf: list[bool] = []
    child: list[int] = []
    if n == 0:
        empty = np.zeros((0, 6), dtype=np.int64)
        return BoxIndex(empty, ids, empty, np.zeros(0, np.int64), np.zeros(0, np.int64),
                        np.zeros(0, np.bool_), np.zeros(0, np.int64), -1, 0)

    level_boxes = boxes
    level_refs = np.arange(n)
    leaf = True
    height = 0
    while True:
        height += 1
        groups = _str_groups(level_boxes, fanout)
        new_refs = []
        new_boxes = []
        for g in groups:
            node_start.append(len(child))
            node_count.append(len(g))
            node_leaf.append(leaf)
            child.extend(int(r) for r in level_refs[g])
            sub = level_boxes[g]
            nb = np.concatenate([sub[:, :3].min(axis=0), sub[:, 3:].max(axis=0)])
            node_box.append(nb)
            new_refs.append(len(node_box) - 1)
            new_boxes.append(nb)
        leaf = False
        level_boxes = np.array(new_boxes, dtype=np.int64)
        level_refs = np.array(new_refs, dtype=np.int64)
        if len(groups) == 1:
            break

    return BoxIndex(
        entry_box=np.ascontiguousarray(boxes, dtype=np.int64),
        entry_ids=np.asarray(ids, dtype=np.int64),
        node_box=np.array(node_box, dtype=np.int64),
        node_start=np.array(node_start, dtype=np.int64),
        node_count=np.array(node_count, dtype=np.int64),
        node_leaf=np.array(node_leaf, dtype=np.bool_),
        child=np.array(child, dtype=np.int64),
        root=int(level_refs[0]),
        height=height,
    )


def build_index(components: Sequence[Component] | PackedComponents,
                fanout: int = DEFAULT_FANOUT) -> BoxIndex:
    """Bulk-load an index over the components' boxes. Duplicate ids are rejected."""
    if isinstance(components, PackedComponents):
        return _build(components.boxes, components.ids, fanout)
    comps = sorted(components, key=lambda c: c.id)
    ids = np.array([c.id for c in comps], dtype=np.int64)
    if len(ids) > 1 and np.any(ids[1:] == ids[:-1]):
        raise ContractError(f"duplicate component id {int(ids[1:][ids[1:] == ids[:-1]][0])}")
    boxes = np.array([c.bbox.lo + c.bbox.hi for c in comps], dtype=np.int64).reshape(len(comps), 6)
    return _build(boxes, ids, fanout)


def stab_query(index: BoxIndex, p: Sequence[int]) -> list[int]:
    """Ids of all entries whose box contains ``p``, ascending."""
    return [int(i) for i in index.entry_ids[index.query_rows(p)]]


def index_entries(index: BoxIndex) -> list[tuple[int, Aabb]]:
    return [(int(i), Aabb.from_corners(b[:3], b[3:]))
            for i, b in zip(index.entry_ids, index.entry_box)]
