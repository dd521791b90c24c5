"""Vessel-tree phantoms: a noisy image and its binary ground truth.

A vessel segment is a capsule (all points within ``radius`` of the segment
[start, end]). Each segment casts a spherical shadow centred at its mid-point
with radius equal to its length; the shadow lowers the image signal linearly
towards the centre. Shadows are subtracted from the image, and the ground
truth never sees them.

Two passes run in lockstep, one slice at a time:

* ground truth: segment capsules valued 1, combined with max over u8;
* shadow field: shadow components combined with sum over f32.

Image voxel = clamp(intensity * truth + shadow + sigma * N(0, 1)), rounded to
the image scalar type. The noise draw for voxel ``k`` depends only on
(seed, k); see ``prng``.

Segment files are plain text, coordinates in voxel units (0-based)::

    # comment
    [segments]
    sx sy sz ex ey ez r
    [shadows]
    cx cy cz r strength

Lines before any section header are segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from . import _kernels
from .functions import Capsule, SphericalShadow, pack_components
from .model import Aabb, CombineOp, Component, ContractError, ScalarType, VoxelGrid
from .prng import SplitMix64, noise_key
from .rasterize import NestedSweeps, bruteforce_slices, spatial_index_slices
from .sinks import SinkSummary, VoxelSink

Point = tuple[float, float, float]

PHANTOM_METHODS = ("nested-sweeps", "spatial-index", "bruteforce")
DEFAULT_INTENSITY = 200.0
DEFAULT_SIGMA = 10.0
DEFAULT_SHADOW_STRENGTH = 1.0


@dataclass(frozen=True)
class VesselSegment:
    start: Point
    end: Point
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        if not self.radius > 0:
            raise ContractError(f"segment radius must be positive, got {self.radius}")

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def midpoint(self) -> Point:
        return tuple((a + b) / 2.0 for a, b in zip(self.start, self.end))


@dataclass(frozen=True)
class ShadowSpec:
    center: Point
    r: float
    strength: float = DEFAULT_SHADOW_STRENGTH

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not self.r > 0:
            raise ContractError(f"shadow radius must be positive, got {self.r}")


def _clamped_box(lo: Sequence[float], hi: Sequence[float], grid: VoxelGrid) -> Optional[Aabb]:
    """Integer box [floor(lo), ceil(hi)] clipped to the grid, or None if nothing is left."""
    ilo = [max(0, math.floor(v)) for v in lo]
    ihi = [min(d - 1, math.ceil(v)) for v, d in zip(hi, grid.dims)]
    if any(a > b for a, b in zip(ilo, ihi)):
        return None
    return Aabb.from_corners(ilo, ihi)


def segment_box(seg: VesselSegment, grid: VoxelGrid) -> Optional[Aabb]:
    lo = [min(a, b) - seg.radius for a, b in zip(seg.start, seg.end)]
    hi = [max(a, b) + seg.radius for a, b in zip(seg.start, seg.end)]
    return _clamped_box(lo, hi, grid)


def segment_to_component(seg: VesselSegment, grid: VoxelGrid, intensity: float = 1.0,
                         id: int = 0, outside: float = 0.0) -> Optional[Component]:
    """Capsule component for ``seg``; None when its box misses the grid.

    ``outside`` should be the identity of the combine the component is
    used with (0 for max over unsigned types).
    """
    box = segment_box(seg, grid)
    if box is None:
        return None
    return Component(id, box, Capsule(seg.start, seg.end, seg.radius, intensity, outside))


def shadow_to_component(shadow: ShadowSpec, grid: VoxelGrid, id: int = 0) -> Optional[Component]:
    box = _clamped_box([c - shadow.r for c in shadow.center],
                       [c + shadow.r for c in shadow.center], grid)
    if box is None:
        return None
    return Component(id, box, SphericalShadow(shadow.center, shadow.r, shadow.strength))


def split_segment(seg: VesselSegment, k: int) -> list[VesselSegment]:
    """Cut ``seg`` into ``k`` equal axial pieces with the same radius.

    The union of the pieces is the original capsule; only the boxes change.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    pts = [tuple(s + (e - s) * j / k for s, e in zip(seg.start, seg.end)) for j in range(k + 1)]
    return [VesselSegment(pts[j], pts[j + 1], seg.radius) for j in range(k)]


def shadows_for_segments(segments: Iterable[VesselSegment],
                         strength: float = DEFAULT_SHADOW_STRENGTH) -> list[ShadowSpec]:
    """One shadow per non-degenerate segment: centred at the mid-point, radius = length."""
    return [ShadowSpec(s.midpoint, s.length, strength) for s in segments if s.length > 0]


def segment_components(segments: Sequence[VesselSegment], grid: VoxelGrid, intensity: float = 1.0,
                       split: int = 1) -> list[Component]:
    out = []
    for seg in segments:
        for piece in split_segment(seg, split) if split > 1 else [seg]:
            c = segment_to_component(piece, grid, intensity, id=len(out))
            if c is not None:
                out.append(c)
    return out


def shadow_components(shadows: Sequence[ShadowSpec], grid: VoxelGrid) -> list[Component]:
    out = []
    for sh in shadows:
        c = shadow_to_component(sh, grid, id=len(out))
        if c is not None:
            out.append(c)
    return out


# -- noise --------------------------------------------------------------------

def apply_gaussian_noise(values: np.ndarray, sigma: float, seed: int, first_index: int = 0,
                         scalar: ScalarType | str | None = None) -> np.ndarray:
    """Return ``values`` plus sigma * N(0, 1) per element.

    Element ``k`` (in C order) gets the draw for linear index
    ``first_index + k``. With ``scalar`` the result is rounded and clamped
    to that type; otherwise float64 is returned.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    work = np.array(values, dtype=np.float64, order="C")
    if sigma > 0:
        _kernels.add_noise(work, first_index, float(sigma), np.uint64(noise_key(seed)))
    if scalar is None:
        return work
    scalar = ScalarType.parse(scalar)
    out = np.empty(work.shape, dtype=scalar.dtype)
    _kernels.store_scalars(work, out, scalar.code, scalar.max_value, scalar.min_value)
    return out


class NoiseSink(VoxelSink):
    """Adds per-voxel Gaussian noise to each line, then forwards it to ``inner``."""

    tag = "noise"

    def __init__(self, inner: VoxelSink, sigma: float, seed: int):
        if sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {sigma}")
        self.inner = inner
        self.sigma = float(sigma)
        self.key = np.uint64(noise_key(seed))
        self._work = None
        self._line = None
        super().__init__()

    def _open(self):
        self.inner.begin(self.grid)
        self._work = np.empty(self.grid.dx, dtype=np.float64)
        self._line = np.empty(self.grid.dx, dtype=self.grid.scalar.dtype)

    def _write(self, z, y, values):
        if self.sigma == 0:
            self.inner.accept_line(z, y, values)
            return
        g = self.grid
        self._work[:] = values
        _kernels.add_noise(self._work, (z * g.dy + y) * g.dx, self.sigma, self.key)
        s = g.scalar
        _kernels.store_scalars(self._work, self._line, s.code, s.max_value, s.min_value)
        self.inner.accept_line(z, y, self._line)

    def _finish(self, summary):
        inner = self.inner.finish()
        summary.checksum = inner.checksum
        summary.path = inner.path
        summary.bytes_written = inner.bytes_written

    def abort(self):
        super().abort()
        self.inner.abort()


# -- rasterization ------------------------------------------------------------

@dataclass
class PhantomOptions:
    intensity: float = DEFAULT_INTENSITY
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    image_scalar: ScalarType = ScalarType.U8
    split: int = 1
    method: str = "nested-sweeps"

    def __post_init__(self):
        self.image_scalar = ScalarType.parse(self.image_scalar)
        if self.method not in PHANTOM_METHODS:
            raise ValueError(f"unknown phantom method {self.method!r}; choose from {PHANTOM_METHODS}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if self.split < 1:
            raise ValueError(f"split must be at least 1, got {self.split}")


@dataclass
class PhantomResult:
    truth: SinkSummary
    image: SinkSummary
    n_segments: int
    n_shadows: int
    per_slice_active: np.ndarray = field(repr=False, default=None)


def _slices(method, packed, grid, op, stats: list):
    if method == "nested-sweeps":
        ns = NestedSweeps(packed, grid, op)
        stats.append(ns.per_slice_active)
        return ns.slices()
    if method == "spatial-index":
        return spatial_index_slices(packed, grid, op)
    return bruteforce_slices(packed, grid, op)


def rasterize_phantom(segments: Sequence[VesselSegment], shadows: Sequence[ShadowSpec],
                      grid: VoxelGrid, image_sink: VoxelSink, truth_sink: VoxelSink,
                      options: PhantomOptions | None = None) -> PhantomResult:
    """Stream the noisy image and the ground truth of a vessel phantom.

    ``grid`` gives the dimensions; the truth volume is u8 and the image uses
    ``options.image_scalar``.
    """
    opt = options or PhantomOptions()
    truth_grid = grid.with_scalar(ScalarType.U8)
    image_grid = grid.with_scalar(opt.image_scalar)
    shade_grid = grid.with_scalar(ScalarType.F32)
    seg_packed = pack_components(segment_components(segments, truth_grid, 1.0, opt.split), truth_grid)
    sh_packed = pack_components(shadow_components(shadows, shade_grid), shade_grid)

    stats: list = []
    truth_slices = _slices(opt.method, seg_packed, truth_grid, CombineOp.max(ScalarType.U8), stats)
    shade_slices = _slices(opt.method, sh_packed, shade_grid, CombineOp.sum(ScalarType.F32), [])

    key = np.uint64(noise_key(opt.seed))
    s = opt.image_scalar
    work = np.empty(grid.shape[1:], dtype=np.float64)
    image = np.empty(grid.shape[1:], dtype=s.dtype)
    plane_size = grid.dx * grid.dy

    image_sink.begin(image_grid)
    truth_sink.begin(truth_grid)
    try:
        for (z, truth), (_, shade) in zip(truth_slices, shade_slices):
            np.multiply(truth, opt.intensity, out=work)
            work += shade
            if opt.sigma > 0:
                _kernels.add_noise(work, z * plane_size, opt.sigma, key)
            _kernels.store_scalars(work, image, s.code, s.max_value, s.min_value)
            truth_sink.accept_plane(z, truth)
            image_sink.accept_plane(z, image)
    except BaseException:
        image_sink.abort()
        truth_sink.abort()
        raise
    return PhantomResult(truth_sink.finish(), image_sink.finish(), len(seg_packed), len(sh_packed),
                         stats[0] if stats else None)


# -- random trees -------------------------------------------------------------

def random_vessel_tree(grid: VoxelGrid, n: int, seed: int = 0, root_radius: float = 4.0,
                       min_radius: float = 0.75, length: tuple[float, float] = (4.0, 20.0),
                       taper: float = 0.85) -> list[VesselSegment]:
    """Grow ``n`` connected segments from a random root inside the grid.

    Each new segment starts at the end of a uniformly chosen earlier one
    (or at the root), heads in a uniform random direction and has radius
    ``taper`` times its parent's, floored at ``min_radius``. Endpoints that
    would leave the grid are redrawn.
    """
    rng = SplitMix64(seed)
    hi = [d - 1 for d in grid.dims]

    def uniform(a, b):
        return a + (b - a) * rng.random()

    root = tuple(uniform(0, h) for h in hi)
    tips: list[tuple[Point, float]] = [(root, root_radius)]
    out: list[VesselSegment] = []
    while len(out) < n:
        start, radius = tips[rng.randint(0, len(tips) - 1)]
        for _ in range(64):
            # uniform direction on the sphere
            cz = uniform(-1.0, 1.0)
            phi = uniform(0.0, 2.0 * math.pi)
            sr = math.sqrt(max(0.0, 1.0 - cz * cz))
            step = uniform(*length)
            end = (start[0] + step * sr * math.cos(phi), start[1] + step * sr * math.sin(phi),
                   start[2] + step * cz)
            if all(0.0 <= e <= h for e, h in zip(end, hi)):
                break
        else:
            end = start
        out.append(VesselSegment(start, end, radius))
        tips.append((end, max(min_radius, radius * taper)))
    return out


# -- text format ---------------------------------------------------------------

class SegmentFileError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_segments(lines: Iterable[str]) -> tuple[list[VesselSegment], list[ShadowSpec]]:
    segments: list[VesselSegment] = []
    shadows: list[ShadowSpec] = []
    section = "segments"
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line not in ("[segments]", "[shadows]"):
                raise SegmentFileError(lineno, f"unknown section {line}")
            section = line[1:-1]
            continue
        parts = line.split()
        want = 7 if section == "segments" else 5
        if len(parts) != want:
            raise SegmentFileError(lineno, f"{section} line needs {want} numbers, got {len(parts)}")
        try:
            v = [float(p) for p in parts]
        except ValueError as exc:
            raise SegmentFileError(lineno, str(exc)) from None
        if not all(math.isfinite(a) for a in v):
            raise SegmentFileError(lineno, "non-finite value")
        try:
            if section == "segments":
                segments.append(VesselSegment(v[0:3], v[3:6], v[6]))
            else:
                shadows.append(ShadowSpec(v[0:3], v[3], v[4]))
        except ContractError as exc:
            raise SegmentFileError(lineno, str(exc)) from None
    return segments, shadows


def parse_segment_file(path) -> tuple[list[VesselSegment], list[ShadowSpec]]:
    with open(path, encoding="utf-8") as fh:
        return parse_segments(fh)


def write_segments(fh: TextIO, segments: Sequence[VesselSegment],
                   shadows: Sequence[ShadowSpec] = ()) -> None:
    """Write the text form; floats use ``repr`` so parsing gives back equal objects."""
    fh.write("[segments]\n")
    for s in segments:
        fh.write(" ".join(repr(v) for v in (*s.start, *s.end, s.radius)) + "\n")
    if shadows:
        fh.write("[shadows]\n")
        for s in shadows:
            fh.write(" ".join(repr(v) for v in (*s.center, s.r, s.strength)) + "\n")


def write_segment_file(path, segments: Sequence[VesselSegment],
                       shadows: Sequence[ShadowSpec] = ()) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        write_segments(fh, segments, shadows)
