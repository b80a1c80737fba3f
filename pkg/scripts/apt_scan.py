"""Measured vs predicted APT failure fractions over a scan of cutoffs."""

import argparse

import numpy as np

from rngsentinel.bitstream import SeededSource, SymbolStream
from rngsentinel.health_tests import AdaptiveProportionTest, AptConfig
from rngsentinel.isn_entropy import apt_scan

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--windows", type=int, default=10**5)
ap.add_argument("--seed", type=int, default=1)
args = ap.parse_args()

cfg = AptConfig()
apt = AdaptiveProportionTest(cfg)
stream = SymbolStream(SeededSource(args.seed), 4)
counts = []
left = args.windows
while left:
    w = min(left, 10**4)
    counts.append(apt.feed_counts(stream.next_symbols(w * cfg.window)))
    left -= w
rows = apt_scan(np.concatenate(counts), cfg, range(36, 63), range(8, 29))
print(f"{'side':>5} {'C':>3} {'measured':>11} {'predicted':>11} {'sigma':>9}  within")
for r in rows:
    print(f"{r['side']:>5} {r['cutoff']:>3} {r['measured']:>11.4e} {r['predicted']:>11.4e} {r['sigma']:>9.2e}  {r['within']}")
