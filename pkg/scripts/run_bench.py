#!/usr/bin/env python3
"""Desk-scale throughput comparison of PE-AONT and the baselines; writes a CSV and prints a table."""

import argparse
import sys

from peaont.bench import BASELINES, PE_AONT_CONFIGS, BenchConfig, parse_scheme_spec, parse_size, run_bench


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", default="100MiB")
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--schemes", nargs="+", help="default: four PE-AONT configurations plus all baselines")
    ap.add_argument("--direction", choices=["protect", "both"], default="protect")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--csv", default="bench.csv")
    args = ap.parse_args()

    schemes = [parse_scheme_spec(s) for s in args.schemes] if args.schemes else PE_AONT_CONFIGS + BASELINES
    config = BenchConfig(schemes=schemes, data_sizes=[parse_size(args.size)], repetitions=args.reps,
                         seed=args.seed, direction=args.direction)

    def progress(spec, size, rep):
        if spec is schemes[-1]:
            print(f"rep {rep + 1}/{args.reps}", file=sys.stderr, end="\r")

    report = run_bench(config, progress)
    print(file=sys.stderr)
    with open(args.csv, "w") as fh:
        fh.write(report.to_csv())
    print(report.format_table())
    bad = report.counter_violations()
    for line in bad:
        print("counter law violated:", line, file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
