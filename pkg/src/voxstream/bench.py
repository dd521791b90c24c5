"""Benchmark harness: time rasterizers over a matrix of synthetic experiments.

Each cell (dims, n, e, method, sink) is run ``repeats`` times with seeds
``seed, seed + 1, ...``. Every run yields one ``run`` row; each cell then
gets one ``summary`` row whose ``wall_time`` is the median over successful
runs, with ``wall_min`` / ``wall_max`` alongside. A run that raises becomes
a row with ``status=failed`` and the harness moves on.

Timed region: rasterization plus sink finish (flush, and fsync for raw
files unless ``sync=False``). Component generation is not timed. The
``baseline`` method streams a constant volume through the same sink.

``peak_rss`` is the process peak resident set size at the end of the run,
so it never decreases across a matrix; run a single cell per process for
isolated numbers. Page-cache state is not controlled. For cold-cache
timings drop caches between runs yourself
(``sync; echo 3 > /proc/sys/vm/drop_caches`` as root).

CSV: UTF-8, comma separated, header row of ``FIELDS``; dims are written as
``XxYxZ``.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import resource
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TextIO

from .rasterize import BUFFER_METHODS, METHODS, rasterize
from .model import CombineOp, ScalarType
from .sinks import MemSink, make_sink, write_constant_volume
from .synthetic import ExperimentSpec, generate_components

BENCH_METHODS = ("baseline",) + METHODS
SINKS = ("null", "checksum", "mem", "raw")
BRUTEFORCE_LIMIT = 128 ** 3
SCRATCH_ENV = "VOXSTREAM_SCRATCH"


def scratch_dir(path: str | os.PathLike | None = None) -> Path:
    """``path``, else $VOXSTREAM_SCRATCH, else the system temp directory."""
    p = Path(path or os.environ.get(SCRATCH_ENV) or tempfile.gettempdir())
    p.mkdir(parents=True, exist_ok=True)
    return p


def peak_rss() -> int:
    """Peak resident set size of this process in bytes (best effort).

    Reads VmHWM on Linux: unlike ``ru_maxrss`` it restarts at exec, so a
    child spawned by a large parent does not inherit the parent's peak.
    """
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    r = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return int(r if sys.platform == "darwin" else r * 1024)


@dataclass
class BenchRecord:
    row: str
    method: str
    dims: tuple[int, int, int]
    n: int
    e: float
    seed: int
    sink: str
    buffer: str
    scalar: str
    op: str
    wall_time: float
    wall_min: float
    wall_max: float
    runs: int
    peak_rss: int
    relative_volume: float
    checksum: str
    status: str
    error: str = ""

    def to_row(self) -> dict[str, str]:
        out = {}
        for f in FIELDS:
            v = getattr(self, f)
            if f == "dims":
                v = "x".join(str(d) for d in v)
            elif isinstance(v, float):
                v = repr(v)
            out[f] = str(v)
        return out

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "BenchRecord":
        kw = {}
        for f in dataclasses.fields(cls):
            v = row[f.name]
            if f.name == "dims":
                kw[f.name] = tuple(int(d) for d in v.split("x"))
            elif f.type == "int":
                kw[f.name] = int(v)
            elif f.type == "float":
                kw[f.name] = float(v)
            else:
                kw[f.name] = v
        return cls(**kw)


FIELDS = tuple(f.name for f in dataclasses.fields(BenchRecord))


def write_csv(records: Iterable[BenchRecord], fh: TextIO, header: bool = True) -> None:
    w = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
    if header:
        w.writeheader()
    for r in records:
        w.writerow(r.to_row())
        fh.flush()


def read_csv(fh: TextIO) -> list[BenchRecord]:
    return [BenchRecord.from_row(r) for r in csv.DictReader(fh)]


@dataclass(frozen=True)
class Cell:
    dims: tuple[int, int, int]
    n: int
    e: float
    method: str
    sink: str


@dataclass
class Matrix:
    dims: Sequence[tuple[int, int, int]]
    n: Sequence[int]
    e: Sequence[float]
    methods: Sequence[str] = BENCH_METHODS
    sinks: Sequence[str] = ("null",)
    repeats: int = 5
    seed: int = 0
    scalar: str = "u8"
    op: str = "sum"
    buffer: str = "memory"
    sync: bool = True
    allow_bruteforce: bool = False
    scratch: Optional[str] = None

    def __post_init__(self):
        for m in self.methods:
            if m not in BENCH_METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {BENCH_METHODS}")
        for s in self.sinks:
            if s not in SINKS:
                raise ValueError(f"unknown sink {s!r}; choose from {SINKS}")
        if self.buffer not in ("memory", "disk"):
            raise ValueError(f"buffer must be 'memory' or 'disk', got {self.buffer!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def cells(self) -> Iterator[Cell]:
        for dims in self.dims:
            for n in self.n:
                for e in self.e:
                    for method in self.methods:
                        for sink in self.sinks:
                            yield Cell(tuple(dims), n, e, method, sink)


def _remove_raw(path: Path) -> None:
    for suffix in (".raw", ".rvh"):
        path.with_name(path.name + suffix).unlink(missing_ok=True)


def run_once(cell: Cell, seed: int, scalar: str = "u8", op: str = "sum", buffer: str = "memory",
             sync: bool = True, allow_bruteforce: bool = False, scratch=None,
             out: Optional[str | os.PathLike] = None) -> BenchRecord:
    """Run one rasterization and return its ``run`` record (status ``failed`` on error).

    Raw outputs go to ``out`` if given (and are kept), otherwise to the
    scratch directory and are deleted afterwards.
    """
    rec = BenchRecord("run", cell.method, cell.dims, cell.n, cell.e, seed, cell.sink, buffer,
                      ScalarType.parse(scalar).value, op, 0.0, 0.0, 0.0, 0, 0, 0.0, "", "failed")
    tmp_paths: list[Path] = []
    t0 = time.perf_counter()
    try:
        spec = ExperimentSpec(cell.dims, cell.n, cell.e, seed, scalar, op)
        grid = spec.grid
        if cell.method == "bruteforce" and grid.size > BRUTEFORCE_LIMIT and not allow_bruteforce:
            raise ValueError(f"bruteforce above {BRUTEFORCE_LIMIT} voxels needs allow_bruteforce")
        gen = generate_components(spec)
        rec.relative_volume = gen.relative_volume
        combine = CombineOp.parse(op, grid.scalar)
        scratch_path = scratch_dir(scratch)
        tag = f"{cell.method}-{'x'.join(map(str, cell.dims))}-n{cell.n}-s{seed}-p{os.getpid()}"
        path = None
        if cell.sink == "raw":
            if out is None:
                path = scratch_path / tag
                tmp_paths.append(path)
            else:
                path = Path(out)
        sink = make_sink(cell.sink, grid, path, **({"seed": seed, "generator": cell.method,
                                                     "sync": sync} if cell.sink == "raw" else {}))
        buffer_path = None
        if cell.method in BUFFER_METHODS and buffer == "disk":
            buffer_path = scratch_path / f"{tag}.buffer"
        t0 = time.perf_counter()
        try:
            if cell.method == "baseline":
                summary = write_constant_volume(grid, combine.identity, sink)
            else:
                summary = rasterize(cell.method, gen.components, grid, combine, sink,
                                      buffer_path=buffer_path).sink_summary
        finally:
            if buffer_path is not None:
                buffer_path.unlink(missing_ok=True)
        rec.wall_time = rec.wall_min = rec.wall_max = time.perf_counter() - t0
        rec.checksum = summary.checksum or ""
        rec.status = "ok"
        rec.runs = 1
        if isinstance(sink, MemSink):
            sink.volume = None
    except Exception as exc:  # recorded, the matrix keeps going
        rec.wall_time = rec.wall_min = rec.wall_max = time.perf_counter() - t0
        rec.error = f"{type(exc).__name__}: {exc}"
    finally:
        for p in tmp_paths:
            _remove_raw(p)
    rec.peak_rss = peak_rss()
    return rec


def summarize(runs: Sequence[BenchRecord]) -> BenchRecord:
    """The cell's summary row: median/min/max over successful runs."""
    first = runs[0]
    ok = [r for r in runs if r.status == "ok"]
    pick = ok or list(runs)
    times = [r.wall_time for r in pick]
    checks = {r.checksum for r in ok}
    return dataclasses.replace(
        first, row="summary", wall_time=statistics.median(times), wall_min=min(times),
        wall_max=max(times), runs=len(ok), peak_rss=max(r.peak_rss for r in runs),
        relative_volume=statistics.median(r.relative_volume for r in pick),
        checksum=checks.pop() if len(checks) == 1 else "",
        status="ok" if len(ok) == len(runs) else "failed",
        error="" if ok else first.error)


def warm_up(scalar: str = "u8", op: str = "sum") -> None:
    """Compile every kernel on a tiny grid so the first timed run pays no JIT cost."""
    spec = ExperimentSpec((8, 8, 8), 4, 0.5, 0, scalar, op)
    gen = generate_components(spec)
    combine = CombineOp.parse(op, spec.grid.scalar)
    for m in METHODS:
        rasterize(m, gen.components, spec.grid, combine, make_sink("checksum", spec.grid))


def run_matrix(matrix: Matrix) -> Iterator[BenchRecord]:
    """Run cells one after another; yields each run row as it completes, then the summary."""
    warm_up(matrix.scalar, matrix.op)
    for cell in matrix.cells():
        runs = []
        for k in range(matrix.repeats):
            rec = run_once(cell, matrix.seed + k, matrix.scalar, matrix.op, matrix.buffer,
                           matrix.sync, matrix.allow_bruteforce, matrix.scratch)
            runs.append(rec)
            yield rec
        yield summarize(runs)
