#!/usr/bin/env python3
"""Sweep prevalence and false-negative rate for both methods; CSV on stdout.

Example:
    python scripts/sweep.py --n 20000 --trials 10 --f 0.001 0.003 0.01 0.03 --p 0 0.01 0.05
"""
import argparse
import csv
import sys

from grouptest.harness import ExperimentSpec, run_experiment
from grouptest.testbed import TestModel


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--f", type=float, nargs="+", default=[0.001, 0.003, 0.01, 0.03, 0.1])
    ap.add_argument("--p", type=float, nargs="+", default=[0.0, 0.01, 0.05])
    ap.add_argument("--q", type=float, default=0.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["method", "f", "p", "q", "n", "trials", "mean_cost", "cost_sd", "theory_cost", "entropy_cost",
                "mean_false_pos", "mean_false_neg"])
    for f in args.f:
        for p in args.p:
            for method in ("divide_conquer", "group_coding"):
                spec = ExperimentSpec(args.n, f, method, TestModel(p, args.q), trials=args.trials, base_seed=args.seed)
                r = run_experiment(spec, workers=args.workers)
                w.writerow([method, f, p, args.q, args.n, args.trials, f"{r.mean_cost:.5f}", f"{r.cost_stddev:.5f}",
                            f"{r.theory_cost:.5f}", f"{r.entropy_cost:.5f}",
                            f"{r.mean_false_positives:.2f}", f"{r.mean_false_negatives:.2f}"])
                sys.stdout.flush()


if __name__ == "__main__":
    main()
