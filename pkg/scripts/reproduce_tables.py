"""Print the ISN table for k-sigma thresholds and the RCT cutoff table."""

import argparse

from rngsentinel.cli import render_tables, table_one, table_two

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--format", choices=("text", "csv", "jsonl"), default="text")
args = ap.parse_args()

print(render_tables(table_one([0, 1, 2, 3, 4, 5, 6, 7]), table_two(16, [1, 2, 3, 4], [2.0**-20, 2.0**-30, 2.0**-40]),
                    16, args.format), end="")
