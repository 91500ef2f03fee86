#!/usr/bin/env python3
"""Weak-scaling tables from the analytic model.

Evaluates every algorithm/strategy row at its continuous replication
optimum under two scaling regimes: fixed work per process (n grows
linearly with p) and memory-proportional growth (n grows with sqrt of
the process count step).  Writes CSV to stdout or -o.
"""

import argparse
import csv
import sys

from distmm.costmodel import TABLE_ROWS, optimal_c_continuous, predict


def rows(phi: float, r: int):
    setups = [
        ("fixed-work", [(p, 64 * p) for p in (128, 256, 512, 1024)]),
        ("memory-prop", [(1024 * 4 ** k, 8192 * 2 ** k) for k in range(3)]),
    ]
    for name, points in setups:
        prev: dict = {}
        for p, n in points:
            for alg, strat in TABLE_ROWS:
                star = optimal_c_continuous(alg, strat, p, phi=phi)
                rep = predict(alg, strat, p, min(star, float(p)), n, r,
                              phi=phi, continuous=True)
                key = (alg, strat)
                ratio = rep.words / prev[key] if key in prev else ""
                prev[key] = rep.words
                yield [
                    name, p, n, r, phi, alg.value, strat.value,
                    f"{star:.4f}", f"{rep.words:.2f}",
                    f"{ratio:.5f}" if ratio else "",
                ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--phi", type=float, default=0.125)
    ap.add_argument("--r", type=int, default=256)
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)

    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["setup", "p", "n", "r", "phi", "alg", "strategy",
                    "c_continuous", "words", "ratio_to_prev"])
        for row in rows(args.phi, args.r):
            w.writerow(row)
    finally:
        if args.output:
            fh.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
