#!/usr/bin/env python3
"""Print the two-method cost table at N=1e5 for f in {1e-2, 1e-3}."""
import argparse

from grouptest.harness import table1_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    print(table1_report(args.n, args.trials, args.seed, workers=args.workers), end="")


if __name__ == "__main__":
    main()
