"""Monte Carlo experiments over seeded populations.

Trial ``t`` of an experiment uses seed ``base_seed + t`` for the population,
the group-coding design and the method's RNG stream, so every trial can be
rerun on its own.
"""
from __future__ import annotations

import csv
import io
import logging
import statistics
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adaptive, groupcode
from .testbed import PERFECT, TestLedger, TestModel, generate_population, method_stream, pooled_tests_flat
from .theory import check_prevalence, entropy_bound, expected_total_tests, theory_params

log = logging.getLogger(__name__)

METHODS = ("divide_conquer", "group_coding", "individual")
METHOD_ALIASES = {"dnc": "divide_conquer", "gc": "group_coding", "ind": "individual"}
CSV_FIELDS = ["trial", "seed", "method", "f", "n", "tests", "cost", "false_pos", "false_neg"]


def canonical_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return name


@dataclass(frozen=True)
class ExperimentSpec:
    n: int
    f: float
    method: str = "divide_conquer"
    model: TestModel = PERFECT
    with_retest: bool = True
    trials: int = 25
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        check_prevalence(self.f)
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    def seed(self, trial: int) -> int:
        return self.base_seed + trial


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    method: str
    f: float
    n: int
    tests: int
    cost: float
    false_pos: int
    false_neg: int
    infected: int
    first_pass_tests: int = 0
    first_pass_false_pos: int = 0
    m_sequence: tuple = ()


@dataclass
class AggregateResult:
    spec: ExperimentSpec
    records: list
    theory_cost: float
    entropy_cost: float
    mean_cost: float = field(init=False)
    cost_stddev: float = field(init=False)
    mean_false_positives: float = field(init=False)
    mean_false_negatives: float = field(init=False)

    def __post_init__(self):
        costs = [r.cost for r in self.records]
        self.mean_cost = statistics.fmean(costs)
        self.cost_stddev = statistics.stdev(costs) if len(costs) > 1 else 0.0
        self.mean_false_positives = statistics.fmean(r.false_pos for r in self.records)
        self.mean_false_negatives = statistics.fmean(r.false_neg for r in self.records)

    @property
    def cost_stderr(self) -> float:
        return self.cost_stddev / len(self.records) ** 0.5

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.records:
            w.writerow([r.trial, r.seed, r.method, repr(r.f), r.n, r.tests, f"{r.cost:.6f}", r.false_pos, r.false_neg])
        s = self.spec
        mean_tests = statistics.fmean(r.tests for r in self.records)
        w.writerow(["summary", s.base_seed, s.method, repr(s.f), s.n, f"{mean_tests:.2f}", f"{self.mean_cost:.6f}",
                    f"{self.mean_false_positives:.2f}", f"{self.mean_false_negatives:.2f}"])
        return buf.getvalue()

    def summary_text(self) -> str:
        s = self.spec
        lines = [
            f"method={s.method} n={s.n} f={s.f!r} trials={s.trials} base_seed={s.base_seed} "
            f"p={s.model.p} q={s.model.q} retest={s.with_retest}",
            f"mean_cost={self.mean_cost:.6f} cost_stddev={self.cost_stddev:.6f}",
            f"mean_false_pos={self.mean_false_positives:.2f} mean_false_neg={self.mean_false_negatives:.2f}",
            f"theory_cost={self.theory_cost:.6f} entropy_cost={self.entropy_cost:.6f}",
        ]
        return "\n".join(lines) + "\n"


def theory_cost(spec: ExperimentSpec) -> float:
    """Perfect-test expected cost of the method, per subject."""
    if spec.method == "individual":
        return 1.0
    if spec.method == "group_coding":
        p = theory_params(spec.f)
        design_groups = groupcode.n_groups_for(spec.n, p.m, p.k)
        first = design_groups / spec.n
        if not spec.with_retest:
            return first
        extra = expected_total_tests(spec.f, p.m, p.k, 1, True) - expected_total_tests(spec.f, p.m, p.k, 1, False)
        return first + extra
    return adaptive.expected_tests(adaptive.make_schedule(spec.f), spec.n) / spec.n


def run_trial(spec: ExperimentSpec, trial: int) -> TrialRecord:
    seed = spec.seed(trial)
    pop = generate_population(spec.n, spec.f, seed)
    rng = method_stream(seed)
    truth = pop.infected
    first_tests = first_fp = 0
    m_seq: tuple = ()
    if spec.method == "divide_conquer":
        trace = adaptive.run_divide_and_conquer(pop, adaptive.make_schedule(spec.f), spec.model, rng)
        reported, ledger = trace.positives, trace.ledger
        m_seq = tuple(trace.m_sequence)
    elif spec.method == "group_coding":
        design = groupcode.build_design(spec.n, spec.f, seed)
        result = groupcode.run_group_coding(pop, design, spec.model, rng, with_retest=spec.with_retest)
        reported, ledger = result.reported, result.ledger
        first_tests = ledger.stage_total("first-pass")
        first_fp = result.false_positive_count
        m_seq = (design.m,)
    else:
        ledger = TestLedger()
        outcome = pooled_tests_flat(pop, np.arange(pop.n), np.arange(pop.n), spec.model, ledger, rng, "individual")
        reported = np.flatnonzero(outcome)
    called = np.zeros(spec.n, dtype=bool)
    called[reported] = True
    tests = ledger.tests_performed
    return TrialRecord(
        trial=trial,
        seed=seed,
        method=spec.method,
        f=spec.f,
        n=spec.n,
        tests=tests,
        cost=tests / spec.n,
        false_pos=int(np.count_nonzero(called & ~truth)),
        false_neg=int(np.count_nonzero(truth & ~called)),
        infected=pop.infected_count,
        first_pass_tests=first_tests,
        first_pass_false_pos=first_fp,
        m_sequence=m_seq,
    )


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> AggregateResult:
    """Run ``spec.trials`` independent trials; output does not depend on ``workers``."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_trial, [spec] * spec.trials, range(spec.trials)))
    else:
        records = [run_trial(spec, t) for t in range(spec.trials)]
    log.debug("finished %d trials of %s", spec.trials, spec.method)
    return AggregateResult(
        spec=spec,
        records=records,
        theory_cost=theory_cost(spec),
        entropy_cost=entropy_bound(spec.f, 1),
    )


def _mean(xs) -> float:
    return statistics.fmean(xs)


def table1_report(n: int = 100_000, trials: int = 1, base_seed: int = 0, fs=(1e-2, 1e-3), workers: int = 1) -> str:
    """Both methods side by side for each prevalence, laid out like the cost table.

    With ``trials > 1`` the realization columns become means over trials and
    the cost columns carry a standard deviation.
    """
    rows = []
    header = ("f", "true infect", "iters", "M (D&C)", "N_t", "cost", "M", "K",
              "false pos", "N_t 1st/total", "cost 1st/total", "min cost")
    for f in fs:
        if n * f < 10:
            warnings.warn(f"n*f = {n * f:g} < 10: single realizations will be very noisy", stacklevel=2)
        dnc = run_experiment(ExperimentSpec(n, f, "divide_conquer", trials=trials, base_seed=base_seed), workers)
        p = theory_params(f)
        sd = f" ±{dnc.cost_stddev:.3f}" if trials > 1 else ""
        try:
            gc = run_experiment(ExperimentSpec(n, f, "group_coding", trials=trials, base_seed=base_seed), workers)
        except groupcode.DesignInfeasible as exc:
            warnings.warn(f"group coding skipped at f={f:g}: {exc}", stacklevel=2)
            gc_cells = ("infeasible", "-", "-")
        else:
            first = _mean(r.first_pass_tests for r in gc.records)
            total = _mean(r.tests for r in gc.records)
            gsd = f" ±{gc.cost_stddev:.3f}" if trials > 1 else ""
            gc_cells = (
                f"{_mean(r.first_pass_false_pos for r in gc.records):.0f}",
                f"{first:.0f}/{total:.0f}",
                f"{first / n:.3f}/{gc.mean_cost:.3f}{gsd}",
            )
        rows.append((
            f"{f:g}",
            f"{_mean(r.infected for r in dnc.records):.0f}",
            str(len(dnc.records[0].m_sequence)),
            ", ".join(map(str, dnc.records[0].m_sequence)),
            f"{_mean(r.tests for r in dnc.records):.0f}",
            f"{dnc.mean_cost:.3f}{sd}",
            str(p.m),
            str(p.k),
            *gc_cells,
            f"{p.bits_per_subject:.3f}",
        ))
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]

    def fmt(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths))

    out = [f"N={n} trials={trials} base_seed={base_seed}", fmt(header), "-+-".join("-" * w for w in widths)]
    out.extend(fmt(r) for r in rows)
    return "\n".join(out) + "\n"
