"""Scaled-down benchmark matrix: every method over growing cubic grids.

Writes CSV rows (see voxstream.bench) to stdout or --out. Example:

    python scripts/bench_matrix.py --sizes 64 128 256 --n 10 10000 --e 0.01 0.1 --out bench.csv
"""

import argparse
import sys

from voxstream.bench import BENCH_METHODS, SINKS, Matrix, run_matrix, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--n", type=int, nargs="+", default=[10, 10_000])
    ap.add_argument("--e", type=float, nargs="+", default=[0.01, 0.1])
    ap.add_argument("--methods", nargs="+", choices=BENCH_METHODS,
                    default=["baseline", "component-order", "component-order-sorted",
                             "nested-sweeps", "spatial-index"])
    ap.add_argument("--sinks", nargs="+", choices=SINKS, default=["null"])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--buffer", choices=["memory", "disk"], default="memory")
    ap.add_argument("--scratch", default=None)
    ap.add_argument("--out", default=None, help="CSV file (default stdout)")
    args = ap.parse_args(argv)

    matrix = Matrix(dims=[(s, s, s) for s in args.sizes], n=args.n, e=args.e,
                    methods=args.methods, sinks=args.sinks, repeats=args.repeats,
                    buffer=args.buffer, scratch=args.scratch)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        for k, rec in enumerate(run_matrix(matrix)):
            write_csv([rec], fh, header=k == 0)
            if rec.row == "summary":
                print(f"{rec.method:24s} {'x'.join(map(str, rec.dims)):>14s} n={rec.n:<6d} "
                      f"e={rec.e:<5g} median {rec.wall_time:.4f}s", file=sys.stderr)
    finally:
        if fh is not sys.stdout:
            fh.close()


if __name__ == "__main__":
    main()
