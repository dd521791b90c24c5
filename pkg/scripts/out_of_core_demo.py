"""Stream a large vessel phantom to disk and report time, peak memory and file sizes.

    python scripts/out_of_core_demo.py --size 1024 --n 10000 --out /data/phantom

Produces <out>_image.raw/.rvh, <out>_truth.raw/.rvh and <out>_tree.txt. The
volume never exists in memory; peak RSS stays roughly constant as --size grows.
"""

import argparse
import time
from pathlib import Path

from voxstream import VoxelGrid
from voxstream.bench import peak_rss
from voxstream.phantom import (PhantomOptions, random_vessel_tree, rasterize_phantom,
                               shadows_for_segments, write_segment_file)
from voxstream.sinks import RawFileSink


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--n", type=int, default=10_000, help="number of vessel segments")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma", type=float, default=10.0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    grid = VoxelGrid(args.size, args.size, args.size)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    segments = random_vessel_tree(grid, args.n, args.seed)
    shadows = shadows_for_segments(segments)
    write_segment_file(out.with_name(out.name + "_tree.txt"), segments, shadows)

    image = RawFileSink(out.with_name(out.name + "_image"), seed=args.seed, generator="phantom")
    truth = RawFileSink(out.with_name(out.name + "_truth"), seed=args.seed, generator="phantom")
    t0 = time.perf_counter()
    res = rasterize_phantom(segments, shadows, grid, image, truth,
                            PhantomOptions(sigma=args.sigma, seed=args.seed))
    wall = time.perf_counter() - t0
    print(f"{args.size}^3, {res.n_segments} segments, {res.n_shadows} shadows: {wall:.1f}s, "
          f"peak RSS {peak_rss() / 2 ** 20:.0f} MiB")
    for s in (res.image, res.truth):
        print(f"  {s.path}: {s.bytes_written} bytes, xxh64 {s.checksum}")


if __name__ == "__main__":
    main()
