#!/usr/bin/env python3
"""Winner map over the density ratio phi = nnz/(n*r).

Sweeps phi on a log-spaced grid, reports the cheapest
algorithm/strategy row at each point, and locates the density where
the leading ring-family flips from sparse-shifting to dense-shifting.
"""

import argparse
import csv
import sys

from distmm.costmodel import select_algorithm
from distmm.layout import ALGORITHMS_15D, AlgorithmId


def leading_ring_family(p, n, r, phi):
    for rep in select_algorithm(p, n, r, nnz=phi * n * r):
        if rep.query.alg in ALGORITHMS_15D:
            return rep.query.alg


def crossover(p, n, r, lo=0.01, hi=1.0, iters=40):
    if leading_ring_family(p, n, r, lo) is not AlgorithmId.D15_SPARSE_SHIFT:
        return None
    if leading_ring_family(p, n, r, hi) is not AlgorithmId.D15_DENSE_SHIFT:
        return None
    for _ in range(iters):
        mid = (lo + hi) / 2
        if leading_ring_family(p, n, r, mid) is AlgorithmId.D15_SPARSE_SHIFT:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=256)
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--r", type=int, default=256)
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)

    phis = [2 ** (k / 2) / 256 for k in range(0, 21)]
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["phi", "alg", "strategy", "c", "words"])
        for phi in phis:
            best = select_algorithm(args.p, args.n, args.r,
                                    nnz=phi * args.n * args.r)[0]
            w.writerow([f"{phi:.6f}", best.query.alg.value,
                        best.query.strategy.value, best.query.c,
                        f"{best.words:.2f}"])
    finally:
        if args.output:
            fh.close()

    flip = crossover(args.p, args.n, args.r)
    if flip is not None:
        print(f"ring-family crossover near phi = {flip:.4f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
