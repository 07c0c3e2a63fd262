"""Command-line entry point: ``grouptest {bounds,plan,simulate,decode}``.

Exit codes: 0 ok, 2 usage or malformed input, 3 infeasible design,
4 group ids in the results file do not match the design.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import groupcode, harness
from .testbed import TestModel
from .theory import entropy_bound, expected_total_tests, theory_params

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _prevalence(text: str) -> list:
    out = []
    for part in text.split(","):
        try:
            f = float(part)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {part!r}") from None
        if not 0.0 < f < 1.0:
            raise argparse.ArgumentTypeError(f"prevalence must be in (0, 1), got {f}")
        out.append(f)
    return out


def _single_prevalence(text: str) -> float:
    vals = _prevalence(text)
    if len(vals) != 1:
        raise argparse.ArgumentTypeError("expected a single prevalence")
    return vals[0]


def _positive_int(text: str) -> int:
    try:
        v = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _rate(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"rate must be in [0, 1), got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grouptest", description="Pooled testing: bounds, designs, simulation, decoding.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("bounds", help="theory table for one or more prevalences")
    p.add_argument("--f", type=_prevalence, action="append", required=True, help="prevalence (repeat or comma-separate)")
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("plan", help="write a group-coding design file")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--f", type=_single_prevalence, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--m", type=_positive_int, help="override the pool size")
    p.add_argument("--k", type=_positive_int, help="override groups per subject")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("simulate", help="Monte Carlo runs of one method")
    p.add_argument("--method", required=True,
                   choices=sorted(set(harness.METHODS) | set(harness.METHOD_ALIASES)))
    p.add_argument("--f", type=_single_prevalence, required=True)
    p.add_argument("--n", type=_positive_int, default=100_000)
    p.add_argument("--trials", type=_positive_int, default=25)
    p.add_argument("--seed", type=_seed, default=0, help="base seed; trial t uses seed+t")
    p.add_argument("--fn-rate", type=_rate, default=0.0)
    p.add_argument("--fp-rate", type=_rate, default=0.0)
    p.add_argument("--retest", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("decode", help="decode lab results against a design file")
    p.add_argument("--design", type=Path, required=True)
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--retest-results", type=Path, help="optional subject_id,0|1 individual retests")
    p.add_argument("--out", type=Path)
    return parser


def _echo_config(args: argparse.Namespace) -> None:
    items = []
    for key, val in sorted(vars(args).items()):
        if key == "f" and isinstance(val, list) and val and isinstance(val[0], list):
            val = [x for part in val for x in part]
        items.append(f"{key}={val}")
    print("# config: " + " ".join(items), file=sys.stderr)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_bounds(args) -> int:
    fs = [x for part in args.f for x in part]
    rows = []
    for f in fs:
        p = theory_params(f)
        if p.degenerate:
            print(f"warning: f={f:g} gives pool size 1; pooling is degenerate here", file=sys.stderr)
        rows.append({
            "f": repr(f),
            "bits_per_subject": f"{p.bits_per_subject:.6f}",
            "entropy_tests": f"{entropy_bound(f, args.n):.1f}",
            "m_exact": f"{p.m_exact:.4f}",
            "m": p.m,
            "k_exact": f"{p.k_exact:.4f}",
            "k": p.k,
            "cost_first_pass": f"{p.first_pass_cost:.6f}",
            "cost_with_retest": f"{p.expected_cost:.6f}",
            "tests_with_retest": f"{expected_total_tests(f, p.m, p.k, args.n, True):.1f}",
        })
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = "".join(" ".join(f"{k}={v}" for k, v in row.items()) + "\n" for row in rows)
    _emit(text, args.out)
    return EXIT_OK


def cmd_plan(args) -> int:
    design = groupcode.build_design(args.n, args.f, args.seed, m=args.m, k=args.k)
    _emit(groupcode.format_design(design), args.out)
    p = theory_params(args.f)
    cost = expected_total_tests(args.f, design.m, design.k, 1, True)
    msg = (f"n_groups={design.n_groups} k={design.k} m={design.m} "
           f"first_pass_cost={design.n_groups / design.n:.6f} expected_cost_with_retest={cost:.6f}")
    if p.degenerate:
        msg += " (warning: pool size 1, pooling is degenerate)"
    print(msg, file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = harness.ExperimentSpec(
        n=args.n,
        f=args.f,
        method=args.method,
        model=TestModel(p=args.fn_rate, q=args.fp_rate),
        with_retest=args.retest,
        trials=args.trials,
        base_seed=args.seed,
    )
    result = harness.run_experiment(spec, workers=args.workers)
    text = result.to_csv() if args.format == "csv" else result.summary_text()
    _emit(text, args.out)
    if args.out is not None or args.format == "csv":
        print(result.summary_text(), end="", file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        design = groupcode.parse_design(args.design.read_text())
        results = groupcode.parse_results(args.results.read_text(), design.n_groups)
        retest = groupcode.parse_retest(args.retest_results.read_text()) if args.retest_results else None
    except OSError as exc:
        raise UsageError(str(exc)) from None
    positives = groupcode.decode(design, results)
    confirmed = None
    if retest is not None:
        confirmed = [int(s) for s in positives if retest.get(int(s), False)]
    _emit(groupcode.format_decode_output(positives, confirmed), args.out)
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "plan": cmd_plan, "simulate": cmd_simulate, "decode": cmd_decode}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _echo_config(args)
    try:
        return COMMANDS[args.subcommand](args)
    except groupcode.DesignInfeasible as exc:
        print(f"error: infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except groupcode.GroupMismatch as exc:
        print(f"error: results do not match design: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (groupcode.DesignFormatError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
