"""Streaming voxel sinks and the raw volume format.

Producers hand a sink one x-line of ``dx`` scalars at a time, in strictly
ascending (z, y) order, then call ``finish()`` exactly once. Every sink
enforces that contract and raises ``SinkOrderError`` on violation.

Raw volume format: ``<name>.raw`` holds the voxels as a bare little-endian
array in z-y-x order (x fastest, 0-based coordinates), so voxel (x, y, z)
sits at byte ``((z*dy + y)*dx + x) * itemsize``. ``<name>.rvh`` is a UTF-8
sidecar of ``key: value`` lines::

    format: voxstream-rvh 1
    dims: <dx> <dy> <dz>
    scalar: uint8 | uint32 | float32
    endianness: little
    order: z-y-x
    data: <name>.raw
    seed: <int>            (optional)
    generator: <free text> (optional)

The header is written only by ``finish()``; a data file without its header
is an incomplete write.

Checksums are XXH64 (seed 0) over the little-endian byte stream, printed as
16 lowercase hex digits.
"""

from __future__ import annotations

import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import xxhash

from .model import ScalarType, VoxelGrid

HEADER_FORMAT = "voxstream-rvh 1"
DEFAULT_MEMORY_BUDGET = 2 << 30


class SinkOrderError(RuntimeError):
    """A producer broke the line-order contract."""


class SinkError(OSError):
    pass


@dataclass
class SinkSummary:
    voxels: int
    lines: int
    checksum: Optional[str] = None
    path: Optional[str] = None
    bytes_written: int = 0


class VoxelSink:
    """Base class: binds to a grid, enforces line order, delegates ``_write``."""

    tag = "sink"

    def __init__(self, grid: VoxelGrid | None = None):
        self.grid: VoxelGrid | None = None
        self._z = 0
        self._y = 0
        self._lines = 0
        self._finished = False
        if grid is not None:
            self.begin(grid)

    def begin(self, grid: VoxelGrid) -> None:
        if self.grid is not None:
            if self.grid != grid:
                raise SinkOrderError(f"sink bound to {self.grid}, producer uses {grid}")
            return
        self.grid = grid
        self._open()

    def accept_line(self, z: int, y: int, values: np.ndarray) -> None:
        grid = self.grid
        if grid is None:
            raise SinkOrderError("accept_line before begin()")
        if self._finished:
            raise SinkOrderError("accept_line after finish()")
        if z != self._z or y != self._y:
            raise SinkOrderError(f"expected line (z={self._z}, y={self._y}), got (z={z}, y={y})")
        if len(values) != grid.dx:
            raise SinkOrderError(f"line has {len(values)} scalars, grid dx is {grid.dx}")
        self._write(z, y, values)
        self._lines += 1
        self._y += 1
        if self._y == grid.dy:
            self._y = 0
            self._z += 1

    def accept_plane(self, z: int, plane: np.ndarray) -> None:
        """All d_y lines of slice z at once; equivalent to d_y ``accept_line`` calls."""
        if type(self).accept_line is not VoxelSink.accept_line:
            for y, row in enumerate(plane):
                self.accept_line(z, y, row)
            return
        grid = self.grid
        if grid is None:
            raise SinkOrderError("accept_plane before begin()")
        if self._finished:
            raise SinkOrderError("accept_plane after finish()")
        if z != self._z or self._y != 0:
            raise SinkOrderError(f"expected line (z={self._z}, y={self._y}), got plane z={z}")
        if plane.shape != (grid.dy, grid.dx):
            raise SinkOrderError(f"plane has shape {plane.shape}, grid needs {(grid.dy, grid.dx)}")
        self._write_plane(z, plane)
        self._lines += grid.dy
        self._z += 1

    def finish(self) -> SinkSummary:
        if self._finished:
            raise SinkOrderError("finish() called twice")
        if self.grid is None:
            raise SinkOrderError("finish() before begin()")
        expected = self.grid.dy * self.grid.dz
        if self._lines != expected:
            self.abort()
            raise SinkOrderError(f"finish() after {self._lines} of {expected} lines")
        self._finished = True
        summary = SinkSummary(voxels=self._lines * self.grid.dx, lines=self._lines)
        self._finish(summary)
        return summary

    def abort(self) -> None:
        """Release resources after a failed production; the output is left flagged incomplete."""
        self._finished = True

    def _open(self) -> None:
        pass

    def _write(self, z: int, y: int, values: np.ndarray) -> None:
        raise NotImplementedError

    def _write_plane(self, z: int, plane: np.ndarray) -> None:
        for y, row in enumerate(plane):
            self._write(z, y, row)

    def _finish(self, summary: SinkSummary) -> None:
        pass


def _le(values: np.ndarray, scalar: ScalarType) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=scalar.dtype)


class NullSink(VoxelSink):
    tag = "null"

    def _write(self, z, y, values):
        pass

    def _write_plane(self, z, plane):
        pass


class ChecksumSink(VoxelSink):
    tag = "checksum"

    def _open(self):
        self._hash = xxhash.xxh64(seed=0)

    def _write(self, z, y, values):
        self._hash.update(_le(values, self.grid.scalar))

    def _write_plane(self, z, plane):
        self._hash.update(_le(plane, self.grid.scalar))

    def _finish(self, summary):
        summary.checksum = self._hash.hexdigest()


class MemSink(VoxelSink):
    """Retains the whole volume as a (dz, dy, dx) array in ``volume``."""

    tag = "mem"

    def __init__(self, grid: VoxelGrid | None = None, budget: int = DEFAULT_MEMORY_BUDGET):
        self.budget = budget
        self.volume: np.ndarray | None = None
        super().__init__(grid)

    def _open(self):
        if self.grid.nbytes > self.budget:
            raise MemoryError(f"volume of {self.grid.nbytes} bytes exceeds memory budget {self.budget}")
        self.volume = np.empty(self.grid.shape, dtype=self.grid.scalar.dtype)

    def _write(self, z, y, values):
        self.volume[z, y] = values

    def _write_plane(self, z, plane):
        self.volume[z] = plane

    def _finish(self, summary):
        summary.checksum = volume_checksum(self.volume)
        summary.bytes_written = self.volume.nbytes


@dataclass(frozen=True)
class RawVolumeHeader:
    dims: tuple[int, int, int]
    scalar: ScalarType
    data: str
    endianness: str = "little"
    seed: Optional[int] = None
    generator: Optional[str] = None

    @property
    def grid(self) -> VoxelGrid:
        return VoxelGrid(*self.dims, scalar=self.scalar)

    def to_text(self) -> str:
        lines = [
            f"format: {HEADER_FORMAT}",
            f"dims: {self.dims[0]} {self.dims[1]} {self.dims[2]}",
            f"scalar: {self.scalar.value}",
            f"endianness: {self.endianness}",
            "order: z-y-x",
            f"data: {self.data}",
        ]
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        if self.generator is not None:
            lines.append(f"generator: {self.generator}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "RawVolumeHeader":
        kv = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition(":")
            if not sep:
                raise ValueError(f"header line {lineno}: expected 'key: value', got {line!r}")
            kv[key.strip()] = value.strip()
        if kv.get("format") != HEADER_FORMAT:
            raise ValueError(f"unsupported header format {kv.get('format')!r}")
        if kv.get("endianness", "little") != "little":
            raise ValueError("only little-endian raw volumes are supported")
        dims = tuple(int(v) for v in kv["dims"].split())
        if len(dims) != 3:
            raise ValueError(f"dims must have three entries, got {kv['dims']!r}")
        return cls(dims=dims, scalar=ScalarType.parse(kv["scalar"]), data=kv["data"],
                   seed=int(kv["seed"]) if "seed" in kv else None,
                   generator=kv.get("generator"))


def raw_paths(path: str | os.PathLike) -> tuple[Path, Path]:
    """(data, header) paths for a volume named ``path`` with or without suffix."""
    p = Path(path)
    if p.suffix in (".raw", ".rvh"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".raw"), p.with_name(p.name + ".rvh")


class RawFileSink(VoxelSink):
    tag = "raw"

    def __init__(self, path: str | os.PathLike, grid: VoxelGrid | None = None,
                 seed: int | None = None, generator: str | None = None,
                 buffer_size: int = 8 << 20, sync: bool = True, checksum: bool = True):
        self.sync = sync
        self.checksum = checksum
        self._hash = None
        self.data_path, self.header_path = raw_paths(path)
        self.seed = seed
        self.generator = generator
        self.buffer_size = buffer_size
        self.bytes_written = 0
        self._fh = None
        super().__init__(grid)

    def _open(self):
        self.data_path.parent.mkdir(parents=True, exist_ok=True)
        if self.header_path.exists():
            self.header_path.unlink()
        try:
            free = shutil.disk_usage(self.data_path.parent).free
        except OSError:
            free = None
        if free is not None and free < self.grid.nbytes:
            raise SinkError(f"{self.grid.nbytes} bytes needed, {free} free at {self.data_path.parent}")
        self._fh = open(self.data_path, "wb", buffering=self.buffer_size)
        self._hash = xxhash.xxh64(seed=0) if self.checksum else None

    def _write(self, z, y, values):
        data = _le(values, self.grid.scalar)
        if self._hash is not None:
            self._hash.update(data)
        try:
            self._fh.write(data)
        except OSError as exc:
            self.abort()
            raise SinkError(f"write failed after {self.bytes_written} bytes: {exc}") from exc
        self.bytes_written += data.nbytes

    def _write_plane(self, z, plane):
        self._write(z, None, plane)

    def _finish(self, summary):
        self._fh.flush()
        if self.sync:
            os.fsync(self._fh.fileno())
        self._fh.close()
        self._fh = None
        header = RawVolumeHeader(self.grid.dims, self.grid.scalar, self.data_path.name,
                                 seed=self.seed, generator=self.generator)
        self.header_path.write_text(header.to_text(), encoding="utf-8")
        summary.path = str(self.data_path)
        summary.bytes_written = self.bytes_written
        if self._hash is not None:
            summary.checksum = self._hash.hexdigest()

    def abort(self):
        super().abort()
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class TeeSink(VoxelSink):
    """Forwards every line to several sinks; the summary merges checksum/path fields."""

    tag = "tee"

    def __init__(self, *sinks: VoxelSink, grid: VoxelGrid | None = None):
        self.sinks = sinks
        self.summaries: list[SinkSummary] = []
        super().__init__(grid)

    def _open(self):
        for s in self.sinks:
            s.begin(self.grid)

    def _write(self, z, y, values):
        for s in self.sinks:
            s.accept_line(z, y, values)

    def _write_plane(self, z, plane):
        for s in self.sinks:
            s.accept_plane(z, plane)

    def _finish(self, summary):
        self.summaries = [s.finish() for s in self.sinks]
        for s in self.summaries:
            summary.checksum = summary.checksum or s.checksum
            summary.path = summary.path or s.path
            summary.bytes_written = max(summary.bytes_written, s.bytes_written)

    def abort(self):
        super().abort()
        for s in self.sinks:
            s.abort()


def raw_file_sink(path, grid: VoxelGrid, **kwargs) -> RawFileSink:
    return RawFileSink(path, grid, **kwargs)


def null_sink() -> NullSink:
    return NullSink()


def mem_sink(grid: VoxelGrid | None = None, budget: int = DEFAULT_MEMORY_BUDGET) -> MemSink:
    return MemSink(grid, budget)


def checksum_sink() -> ChecksumSink:
    return ChecksumSink()


def make_sink(tag: str, grid: VoxelGrid, path=None, **kwargs) -> VoxelSink:
    if tag == "null":
        return NullSink(grid)
    if tag == "checksum":
        return ChecksumSink(grid)
    if tag == "mem":
        return MemSink(grid)
    if tag == "raw":
        if path is None:
            raise ValueError("raw sink needs an output path")
        return RawFileSink(path, grid, **kwargs)
    raise ValueError(f"unknown sink {tag!r}")


def volume_checksum(volume: np.ndarray, scalar: ScalarType | None = None) -> str:
    """XXH64 of a whole volume's little-endian bytes; equals the streaming digest."""
    arr = volume if scalar is None else volume.astype(scalar.dtype, copy=False)
    arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
    h = xxhash.xxh64(seed=0)
    flat = arr.reshape(-1)
    step = 1 << 26
    for s in range(0, flat.size, step):
        h.update(flat[s:s + step])
    return h.hexdigest()


def write_constant_volume(grid: VoxelGrid, value: float, sink: VoxelSink) -> SinkSummary:
    """Stream ``|G|`` copies of ``value`` into ``sink``: the run-time lower bound."""
    sink.begin(grid)
    plane = np.empty((grid.dy, grid.dx), dtype=grid.scalar.dtype)
    try:
        for z in range(grid.dz):
            plane.fill(value)  # produce every voxel, as a rasterizer would
            sink.accept_plane(z, plane)
    except BaseException:
        sink.abort()
        raise
    return sink.finish()


def read_raw_volume(path, mmap: bool = False) -> tuple[RawVolumeHeader, np.ndarray]:
    """Load a raw volume as a (dz, dy, dx) array; the header must exist."""
    data_path, header_path = raw_paths(path)
    header = RawVolumeHeader.parse(header_path.read_text(encoding="utf-8"))
    data_path = header_path.with_name(header.data)
    grid = header.grid
    size = data_path.stat().st_size
    if size != grid.nbytes:
        raise ValueError(f"{data_path} holds {size} bytes, header implies {grid.nbytes}")
    if mmap:
        arr = np.memmap(data_path, dtype=grid.scalar.dtype, mode="r", shape=grid.shape)
    else:
        arr = np.fromfile(data_path, dtype=grid.scalar.dtype).reshape(grid.shape)
    return header, arr
