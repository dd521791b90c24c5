"""Random component sets for run-time experiments.

``n`` boxes with side lengths drawn uniformly from ``{1, ..., round(2m - 1)}``
where ``m = (|G| e / n) ** (1/3)``, so the expected total box volume is
``e |G|`` (``e`` is the expected relative component volume). Each box is
placed uniformly among all positions that keep it inside the grid and
carries a random constant: an integer in ``{1, ..., 255}``, or a float32 in
``[0, 1)`` for float grids.

Draw order per component, all from one SplitMix64 stream seeded with
``seed``: side x, side y, side z, low corner x, y, z, then the constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .functions import KIND_CONSTANT, N_PARAMS, PackedComponents, unpack_components
from .model import Component, ContractError, ScalarType, VoxelGrid
from .prng import SplitMix64


@dataclass(frozen=True)
class ExperimentSpec:
    dims: tuple[int, int, int]
    n: int
    e: float
    seed: int = 0
    scalar: ScalarType = ScalarType.U8
    op: str = "sum"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "scalar", ScalarType.parse(self.scalar))
        if self.n < 0:
            raise ContractError(f"n must be non-negative, got {self.n}")
        if not self.e > 0:
            raise ContractError(f"e must be positive, got {self.e}")
        if self.n and self.side_max < 1:
            raise ContractError(f"m={self.m:.4g} gives an empty side-length range")

    @property
    def grid(self) -> VoxelGrid:
        return VoxelGrid(*self.dims, scalar=self.scalar)

    @property
    def m(self) -> float:
        if self.n == 0:
            return 0.0
        return (self.grid.size * self.e / self.n) ** (1.0 / 3.0)

    @property
    def side_max(self) -> int:
        """Top of the integer side-length range, round(2m - 1), at least 1."""
        return max(1, math.floor(2.0 * self.m - 1.0 + 0.5))


@dataclass
class GeneratedSet:
    components: PackedComponents
    total_volume: int
    relative_volume: float

    def to_components(self) -> list[Component]:
        return unpack_components(self.components)


def generate_components(spec: ExperimentSpec) -> GeneratedSet:
    """Draw ``spec.n`` boxes (possibly none); ids are 0..n-1 in generation order."""
    rng = SplitMix64(spec.seed)
    dims = spec.dims
    top = spec.side_max
    n = spec.n
    boxes = np.empty((n, 6), dtype=np.int64)
    params = np.zeros((n, N_PARAMS), dtype=np.float64)
    for i in range(n):
        sides = [rng.randint(1, top) for _ in range(3)]
        for axis, (s, d) in enumerate(zip(sides, dims)):
            if s > d:
                raise ContractError(
                    f"component {i}: side {'xyz'[axis]}={s} exceeds grid extent {d} "
                    f"(side range 1..{top})")
        lo = [rng.randint(0, d - s) for s, d in zip(sides, dims)]
        boxes[i, :3] = lo
        boxes[i, 3:] = [l + s - 1 for l, s in zip(lo, sides)]
        if spec.scalar.is_float:
            params[i, 0] = rng.random24()
        else:
            params[i, 0] = rng.randint(1, 255)
    packed = PackedComponents(np.arange(n, dtype=np.int64), boxes,
                              np.full(n, KIND_CONSTANT, dtype=np.int64), params)
    total = int(packed.volumes.sum())
    return GeneratedSet(packed, total, total / spec.grid.size)


def write_component_list(components: PackedComponents, fh: TextIO) -> None:
    """One line per component: ``id lo_x lo_y lo_z hi_x hi_y hi_z value``.

    Constants are written with ``repr`` so the text round-trips exactly.
    """
    for i in range(len(components)):
        if components.kinds[i] != KIND_CONSTANT:
            raise ValueError("only constant-valued components have a text form")
        b = components.boxes[i]
        fh.write(f"{components.ids[i]} {b[0]} {b[1]} {b[2]} {b[3]} {b[4]} {b[5]} "
                 f"{float(components.params[i, 0])!r}\n")


def read_component_list(lines: Iterable[str]) -> PackedComponents:
    rows = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"line {lineno}: expected 8 fields, got {len(parts)}")
        rows.append(([int(p) for p in parts[:7]], float(parts[7])))
    n = len(rows)
    params = np.zeros((n, N_PARAMS), dtype=np.float64)
    ids = np.array([r[0][0] for r in rows], dtype=np.int64)
    boxes = np.array([r[0][1:] for r in rows], dtype=np.int64).reshape(n, 6)
    params[:, 0] = [r[1] for r in rows]
    order = np.argsort(ids, kind="stable")
    return PackedComponents(ids[order], boxes[order], np.zeros(n, dtype=np.int64), params[order])
