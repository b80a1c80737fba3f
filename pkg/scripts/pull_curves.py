"""Monobit pull curves: mean-shift vs tail-count estimator under planted bias."""

import argparse
import csv
import sys

from rngsentinel.sensitivity import power_curve

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=32)
ap.add_argument("--N", type=int, default=32)
ap.add_argument("--k", type=float, default=3.0)
ap.add_argument("--trials", type=int, default=10_000)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

rows = power_curve(args.n, args.N, range(0, 11), (1, 10, 100), args.k, args.trials, args.seed)
out = csv.writer(sys.stdout, lineterminator="\n")
out.writerow(["f", "j", "tpp", "fpp", "pull_shift", "pull_tail"])
for r in sorted(rows, key=lambda r: (r.f, r.j)):
    out.writerow([r.f, r.j, f"{r.tpp:.4f}", f"{r.fpp:.4f}", f"{r.pull_shift:.2f}", f"{r.pull_tail:.2f}"])
