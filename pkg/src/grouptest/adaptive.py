"""Divide and conquer: round-based pooling with shrinking pool sizes.

Round 0 splits the whole (shuffled) population into pools of the optimal
size for ``f0``. Negative pools are cleared. Every later round splits each
positive pool of the previous round into near-equal sub-pools of the next,
smaller size, until the size reaches 1 and the survivors are tested
individually.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .testbed import PERFECT, PopulationState, TestLedger, TestModel, method_stream, pooled_tests_flat
from .theory import check_prevalence, optimal_pool_size, round_half_up

SCHEDULE_RULES = ("nested", "doubling")
REPARTITION = ("split", "global")


@dataclass(frozen=True)
class DncSchedule:
    f0: float
    m_sequence: tuple
    rule: str = "nested"

    @property
    def iterations(self) -> int:
        return len(self.m_sequence)


def _pool_size(f: float) -> int:
    return 1 if f >= 0.5 else round_half_up(optimal_pool_size(f))


def make_schedule(f0: float, rule: str = "nested") -> DncSchedule:
    """Precompute the pool size for every round.

    Both rules size each round with the optimal pool size for a running
    prevalence estimate. After round 0 the estimate is ``f0`` divided by the
    chance that a pool is positive (about 2x).

    ``"nested"``: later rounds halve positive pools. A positive pool of size
    ``m`` at prevalence ``f`` has each half positive with probability
    ``1/(1 + (1-f)**(m/2))``, so the estimate grows by ``1 + (1-f)**(m/2)``
    (about 1.7x) per round.

    ``"doubling"``: survivors are treated as a fresh population every round,
    ``f <- f / (1 - (1-f)**m)``, which halves the pool size each round.
    """
    f = check_prevalence(f0)
    if rule not in SCHEDULE_RULES:
        raise ValueError(f"unknown schedule rule {rule!r}")
    m = _pool_size(f)
    seq = [m]
    f = f / (1.0 - (1.0 - f) ** m)
    while m > 1:
        m = min(m, _pool_size(f))
        seq.append(m)
        if rule == "nested":
            f = f * (1.0 + (1.0 - f) ** (m / 2.0))
        else:
            f = f / (1.0 - (1.0 - f) ** m)
    return DncSchedule(f0=float(f0), m_sequence=tuple(seq), rule=rule)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    m: int
    pools_formed: int
    pools_positive: int
    subjects_retained: int
    tests_cumulative: int


@dataclass
class DncTrace:
    records: list
    positives: np.ndarray
    ledger: TestLedger
    history: list = field(default_factory=list, repr=False)

    @property
    def tests(self) -> int:
        return self.ledger.tests_performed

    @property
    def m_sequence(self) -> list:
        return [r.m for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "m", "pools_formed", "pools_positive", "subjects_retained", "tests_cumulative"])
        for r in self.records:
            w.writerow([r.iteration, r.m, r.pools_formed, r.pools_positive, r.subjects_retained, r.tests_cumulative])
        return buf.getvalue()


def split_starts(sizes: np.ndarray, m: int) -> np.ndarray:
    """Start offsets after cutting consecutive blocks of ``sizes`` into ``ceil(s/m)`` near-equal pools."""
    sizes = np.asarray(sizes, dtype=np.int64)
    chunks = -(-sizes // m)
    parent = np.repeat(np.arange(sizes.size), chunks)
    first_chunk = np.cumsum(chunks) - chunks
    j = np.arange(int(chunks.sum())) - first_chunk[parent]
    s, c = sizes[parent], chunks[parent]
    chunk_sizes = s // c + (j < s % c)
    return np.concatenate([[0], np.cumsum(chunk_sizes)[:-1]]).astype(np.int64)


def run_divide_and_conquer(
    pop: PopulationState,
    schedule: DncSchedule,
    model: TestModel = PERFECT,
    rng: np.random.Generator | None = None,
    *,
    repartition: str = "split",
    reestimate: bool = False,
    keep_history: bool = False,
) -> DncTrace:
    """Run the adaptive rounds on ``pop`` and return the per-round trace.

    ``repartition="global"`` pools all survivors together and reshuffles
    them each round instead of splitting positive pools. With
    ``reestimate=True`` only the first pool size comes from ``schedule``;
    each later one uses the prevalence implied by the observed fraction of
    survivors.
    """
    if not schedule.m_sequence:
        raise ValueError("empty schedule")
    if repartition not in REPARTITION:
        raise ValueError(f"unknown repartition strategy {repartition!r}")
    rng = method_stream(pop.seed) if rng is None else rng
    ledger = TestLedger()
    records, history = [], []

    m = schedule.m_sequence[0]
    members = rng.permutation(pop.n)
    starts = split_starts(np.array([pop.n]), m)
    f_est = schedule.f0
    i = 0
    while True:
        outcome = pooled_tests_flat(pop, members, starts, model, ledger, rng, stage=f"round-{i + 1}")
        sizes = np.diff(np.append(starts, members.size))
        retained = members[np.repeat(outcome, sizes)]
        kept_sizes = sizes[outcome]
        records.append(IterationRecord(i + 1, m, int(starts.size), int(outcome.sum()),
                                       int(retained.size), ledger.tests_performed))
        if keep_history:
            history.append(np.sort(retained))
        if m == 1 or retained.size == 0:
            break
        if reestimate:
            f_est = f_est * members.size / retained.size
            m_next = min(m, _pool_size(f_est))
        else:
            m_next = schedule.m_sequence[i + 1]
        m = m_next
        i += 1
        if repartition == "split":
            members = retained
            starts = split_starts(kept_sizes, m)
        else:
            members = rng.permutation(retained)
            starts = split_starts(np.array([members.size]), m)

    positives = np.sort(retained) if m == 1 else np.zeros(0, dtype=np.int64)
    return DncTrace(records=records, positives=positives, ledger=ledger, history=history)


def expected_tests(schedule: DncSchedule, n: int) -> float:
    """Exact expected test count of the ``split`` strategy under a perfect test.

    A sub-pool is only formed when its parent tested positive, so each
    potential pool of size ``s`` costs ``P(parent positive) * ceil(s/m)``
    tests in the next round, with ``P(pool positive) = 1 - (1-f0)**s``.
    """
    f0 = check_prevalence(schedule.f0)
    seq = schedule.m_sequence

    def split(sizes: dict, m: int) -> dict:
        out: dict = {}
        for s, count in sizes.items():
            c = -(-s // m)
            big, small = s % c, c - s % c
            if big:
                out[s // c + 1] = out.get(s // c + 1, 0.0) + count * big
            out[s // c] = out.get(s // c, 0.0) + count * small
        return out

    pools = split({n: 1.0}, seq[0])
    total = sum(pools.values())
    for m in seq[1:]:
        children = {}
        for s, count in pools.items():
            p_pos = 1.0 - (1.0 - f0) ** s
            total += count * p_pos * math.ceil(s / m)
            for cs, cc in split({s: 1.0}, m).items():
                children[cs] = children.get(cs, 0.0) + count * cc
        pools = children
    return total
