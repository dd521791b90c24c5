"""Command line: ``voxstream generate | bench | phantom-gen``.

Coordinates in every file and flag are 0-based voxel indices. Scratch
files (disk-backed buffers, benchmark outputs) go to $VOXSTREAM_SCRATCH,
or the system temp directory when it is unset.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click

from .bench import (BENCH_METHODS, BRUTEFORCE_LIMIT, SINKS, BenchRecord, Cell, Matrix, peak_rss,
                    run_matrix, run_once, write_csv)
from .model import ContractError, ScalarType, VoxelGrid
from .phantom import (DEFAULT_INTENSITY, DEFAULT_SHADOW_STRENGTH, DEFAULT_SIGMA, PHANTOM_METHODS,
                      PhantomOptions, parse_segment_file, random_vessel_tree, rasterize_phantom,
                      shadows_for_segments, write_segment_file)
from .sinks import make_sink, raw_paths

_dims = click.option("--dims", nargs=3, type=click.IntRange(min=1), required=True,
                     metavar="X Y Z", help="Grid size in voxels.")
_SCALARS = ["u8", "u32", "f32", "uint8", "uint32", "float32"]
_scalar = click.option("--scalar", type=click.Choice(_SCALARS),
                       default="u8", show_default=True,
                       callback=lambda ctx, param, v: ScalarType.parse(v).value)
_op = click.option("--op", type=click.Choice(["sum", "max"]), default="sum", show_default=True)


@click.group()
def main():
    """Streaming rasterization of component-based volumetric test data."""


@main.command()
@_dims
@click.option("--n", type=click.IntRange(min=0), default=1000, show_default=True,
              help="Number of random boxes.")
@click.option("--e", type=float, default=0.1, show_default=True,
              help="Expected total box volume relative to the grid.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--method", type=click.Choice(BENCH_METHODS), default="nested-sweeps",
              show_default=True)
@click.option("--sink", type=click.Choice(SINKS), default=None,
              help="Output sink; defaults to raw with --out, else checksum.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output volume name; .raw and .rvh are appended.")
@_scalar
@_op
@click.option("--buffer", type=click.Choice(["memory", "disk"]), default="memory",
              show_default=True, help="Buffer for component-order methods.")
@click.option("--no-sync", is_flag=True, help="Skip fsync on raw outputs.")
@click.option("--allow-bruteforce", is_flag=True,
              help=f"Permit bruteforce on grids above {BRUTEFORCE_LIMIT} voxels.")
@click.option("--phantom", "phantom", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Segment file: rasterize a vessel phantom instead of random boxes.")
@click.option("--intensity", type=float, default=DEFAULT_INTENSITY, show_default=True,
              help="Phantom vessel intensity.")
@click.option("--sigma", type=click.FloatRange(min=0), default=DEFAULT_SIGMA, show_default=True,
              help="Phantom noise standard deviation.")
@click.option("--shadow-strength", type=float, default=DEFAULT_SHADOW_STRENGTH,
              show_default=True, help="Strength of shadows derived from segments.")
@click.option("--no-shadows", is_flag=True, help="Phantom without shadows.")
@click.option("--split", type=click.IntRange(min=1), default=1, show_default=True,
              help="Cut each phantom segment into this many pieces.")
def generate(dims, n, e, seed, method, sink, out, scalar, op, buffer, no_sync, allow_bruteforce,
             phantom, intensity, sigma, shadow_strength, no_shadows, split):
    """Rasterize one volume and print its record as CSV."""
    if sink is None:
        sink = "raw" if out else "checksum"
    if sink == "raw" and not out:
        raise click.UsageError("--sink raw needs --out")
    if out and sink != "raw":
        raise click.UsageError("--out only applies to --sink raw")
    if phantom is not None:
        _generate_phantom(dims, seed, method, sink, out, scalar, phantom, intensity, sigma,
                          shadow_strength, no_shadows, split, no_sync)
        return
    grid = VoxelGrid(*dims)
    if method == "bruteforce" and grid.size > BRUTEFORCE_LIMIT and not allow_bruteforce:
        raise click.UsageError(f"bruteforce above {BRUTEFORCE_LIMIT} voxels needs --allow-bruteforce")
    rec = run_once(Cell(tuple(dims), n, e, method, sink), seed, scalar, op, buffer,
                   sync=not no_sync, allow_bruteforce=allow_bruteforce, out=out)
    write_csv([rec], sys.stdout)
    if rec.status != "ok":
        click.echo(f"error: {rec.error}", err=True)
        sys.exit(1)


def _generate_phantom(dims, seed, method, sink, out, scalar, path, intensity, sigma,
                      shadow_strength, no_shadows, split, no_sync):
    if method not in PHANTOM_METHODS:
        raise click.UsageError(f"--phantom supports methods {', '.join(PHANTOM_METHODS)}")
    try:
        segments, shadows = parse_segment_file(path)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--phantom") from None
    if no_shadows:
        shadows = []
    elif not shadows:
        shadows = shadows_for_segments(segments, shadow_strength)
    grid = VoxelGrid(*dims, scalar=scalar)

    def sink_for(part, g):
        if sink != "raw":
            return make_sink(sink, g)
        base = raw_paths(out)[0].with_suffix("")
        return make_sink("raw", g, base.with_name(f"{base.name}_{part}"), seed=seed,
                         generator="phantom", sync=not no_sync)

    opts = PhantomOptions(intensity=intensity, sigma=sigma, seed=seed, image_scalar=scalar,
                          split=split, method=method)
    image = sink_for("image", grid)
    truth = sink_for("truth", grid.with_scalar(ScalarType.U8))
    t0 = time.perf_counter()
    try:
        res = rasterize_phantom(segments, shadows, grid, image, truth, opts)
    except (ContractError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    wall = time.perf_counter() - t0
    recs = []
    parts = (("phantom-image", res.image, scalar), ("phantom-truth", res.truth, ScalarType.U8.value))
    for part, summary, sc in parts:
        recs.append(BenchRecord("run", f"{part}:{method}", tuple(dims), res.n_segments, 0.0, seed,
                                sink, "memory", sc, "max", wall, wall, wall, 1, peak_rss(), 0.0,
                                summary.checksum or "", "ok"))
    write_csv(recs, sys.stdout)


@main.command()
@click.option("--dims", "dims", nargs=3, type=click.IntRange(min=1), multiple=True, required=True,
              metavar="X Y Z", help="Grid size; repeat for several sizes.")
@click.option("--n", "n", type=click.IntRange(min=0), multiple=True, required=True)
@click.option("--e", "e", type=float, multiple=True, required=True)
@click.option("--method", "methods", type=click.Choice(BENCH_METHODS + ("all",)), multiple=True,
              default=("all",), show_default=True)
@click.option("--sink", "sinks", type=click.Choice(SINKS), multiple=True, default=("null",),
              show_default=True)
@click.option("--repeats", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Run k of each cell uses seed + k.")
@_scalar
@_op
@click.option("--buffer", type=click.Choice(["memory", "disk"]), default="memory",
              show_default=True)
@click.option("--no-sync", is_flag=True)
@click.option("--allow-bruteforce", is_flag=True)
@click.option("--scratch", type=click.Path(file_okay=False), default=None,
              help="Scratch directory (default $VOXSTREAM_SCRATCH or the temp dir).")
def bench(dims, n, e, methods, sinks, repeats, seed, scalar, op, buffer, no_sync,
          allow_bruteforce, scratch):
    """Run a benchmark matrix and write CSV to stdout.

    Cells run one at a time. Failed runs are reported as rows with
    status=failed.
    """
    if "all" in methods:
        methods = BENCH_METHODS
    matrix = Matrix(dims=list(dims), n=list(n), e=list(e), methods=list(methods),
                    sinks=list(sinks), repeats=repeats, seed=seed, scalar=scalar, op=op,
                    buffer=buffer, sync=not no_sync, allow_bruteforce=allow_bruteforce,
                    scratch=scratch)
    write_csv(run_matrix(matrix), sys.stdout)


@main.command("phantom-gen")
@_dims
@click.option("--n", type=click.IntRange(min=0), default=100, show_default=True,
              help="Number of segments.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--root-radius", type=click.FloatRange(min=0, min_open=True), default=4.0,
              show_default=True)
@click.option("--shadow-strength", type=float, default=DEFAULT_SHADOW_STRENGTH, show_default=True)
@click.option("--no-shadows", is_flag=True, help="Write only the [segments] section.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def phantom_gen(dims, n, seed, root_radius, shadow_strength, no_shadows, out):
    """Write a random vessel tree as a segment file."""
    segments = random_vessel_tree(VoxelGrid(*dims), n, seed, root_radius=root_radius)
    shadows = [] if no_shadows else shadows_for_segments(segments, shadow_strength)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_segment_file(out, segments, shadows)
    click.echo(f"{len(segments)} segments, {len(shadows)} shadows -> {out}", err=True)


if __name__ == "__main__":
    main()
