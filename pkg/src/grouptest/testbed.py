"""Synthetic populations, the pooled-test oracle and test accounting.

Randomness comes from numpy's PCG64 ``Generator``. Populations are drawn
from ``default_rng(seed)``; everything a method does at random (shuffles,
test noise) uses a separate stream from :func:`method_stream`, so the
ground truth never depends on how a method consumes randomness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .theory import check_prevalence

MAX_SEED = 2**64


@dataclass(frozen=True)
class PopulationState:
    n: int
    f: float
    seed: int
    infected: np.ndarray = field(repr=False)

    @property
    def infected_count(self) -> int:
        return int(np.count_nonzero(self.infected))

    @property
    def infected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.infected)


@dataclass(frozen=True)
class TestModel:
    """Per-test noise: ``p`` false-negative rate, ``q`` false-positive rate."""

    __test__ = False

    p: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def perfect(self) -> bool:
        return self.p == 0.0 and self.q == 0.0


PERFECT = TestModel()


@dataclass
class TestLedger:
    __test__ = False

    per_stage_counts: list = field(default_factory=list)

    @property
    def tests_performed(self) -> int:
        return sum(c for _, c in self.per_stage_counts)

    def record(self, stage: str, count: int = 1) -> None:
        if count < 0:
            raise ValueError("negative test count")
        if self.per_stage_counts and self.per_stage_counts[-1][0] == stage:
            self.per_stage_counts[-1][1] += count
        else:
            self.per_stage_counts.append([stage, count])

    def stage_total(self, stage: str) -> int:
        return sum(c for s, c in self.per_stage_counts if s == stage)

    def merge(self, other: "TestLedger") -> "TestLedger":
        out = TestLedger([list(x) for x in self.per_stage_counts])
        for stage, count in other.per_stage_counts:
            out.record(stage, count)
        return out


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def method_stream(seed: int) -> np.random.Generator:
    """RNG for shuffling and test noise, independent of the population draw."""
    return np.random.default_rng([check_seed(seed), 1])


def generate_population(n: int, f: float, seed: int) -> PopulationState:
    """Each of ``n`` subjects is infected independently with probability ``f``."""
    f = check_prevalence(f)
    if n < 1:
        raise ValueError(f"population size must be >= 1, got {n}")
    seed = check_seed(seed)
    infected = np.random.default_rng(seed).random(n) < f
    infected.flags.writeable = False
    return PopulationState(n=int(n), f=f, seed=seed, infected=infected)


def population_from_indices(n: int, infected_indices: Sequence[int], f: float = 0.5, seed: int = 0) -> PopulationState:
    """Build a population with a hand-picked infected set (for tests and lab data)."""
    infected = np.zeros(n, dtype=bool)
    idx = np.asarray(list(infected_indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("infected index out of range")
    infected[idx] = True
    infected.flags.writeable = False
    return PopulationState(n=int(n), f=check_prevalence(f), seed=check_seed(seed), infected=infected)


def apply_noise(hot: np.ndarray, model: TestModel, rng: np.random.Generator) -> np.ndarray:
    # one uniform per test, in order, so batched and one-at-a-time calls agree
    u = rng.random(len(hot))
    return np.where(hot, u >= model.p, u < model.q)


def pooled_test(
    pop: PopulationState,
    members,
    model: TestModel,
    ledger: TestLedger,
    rng: np.random.Generator,
    stage: str = "pool",
) -> bool:
    """Test one pool. Positive iff some member is infected, up to noise."""
    idx = np.asarray(members, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("pooled_test called with an empty pool")
    if idx.min() < 0 or idx.max() >= pop.n:
        raise ValueError("pool member index out of range")
    hot = np.array([pop.infected[idx].any()])
    ledger.record(stage)
    return bool(apply_noise(hot, model, rng)[0])


def pooled_tests_flat(
    pop: PopulationState,
    members: np.ndarray,
    starts: np.ndarray,
    model: TestModel,
    ledger: TestLedger,
    rng: np.random.Generator,
    stage: str = "pool",
) -> np.ndarray:
    """Test many disjoint-or-not pools laid out contiguously in ``members``.

    Pool ``j`` is ``members[starts[j]:starts[j+1]]``. Equivalent to calling
    :func:`pooled_test` once per pool in order.
    """
    members = np.asarray(members, dtype=np.int64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size == 0:
        return np.zeros(0, dtype=bool)
    if starts[0] != 0 or np.any(np.diff(starts) <= 0) or starts[-1] >= members.size:
        raise ValueError("pools must be nonempty and contiguous")
    if members.min() < 0 or members.max() >= pop.n:
        raise ValueError("pool member index out of range")
    hot = np.logical_or.reduceat(pop.infected[members], starts)
    ledger.record(stage, int(starts.size))
    return apply_noise(hot, model, rng)


def pooled_tests(pop, pools, model, ledger, rng, stage: str = "pool") -> np.ndarray:
    pools = [np.asarray(p, dtype=np.int64).ravel() for p in pools]
    if not pools:
        return np.zeros(0, dtype=bool)
    sizes = np.array([p.size for p in pools])
    if np.any(sizes == 0):
        raise ValueError("pooled_tests called with an empty pool")
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return pooled_tests_flat(pop, np.concatenate(pools), starts, model, ledger, rng, stage)


def dump_population(pop: PopulationState, path) -> None:
    """Header ``n,f,seed,infected_count`` then the ascending infected indices."""
    idx = ",".join(str(i) for i in pop.infected_indices)
    Path(path).write_text(f"{pop.n},{pop.f!r},{pop.seed},{pop.infected_count}\n{idx}\n")


def load_population(path) -> PopulationState:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty population file")
    try:
        n_s, f_s, seed_s, count_s = lines[0].split(",")
        n, f, seed, count = int(n_s), float(f_s), int(seed_s), int(count_s)
        body = lines[1].strip() if len(lines) > 1 else ""
        idx = [int(x) for x in body.split(",")] if body else []
    except ValueError as exc:
        raise ValueError(f"{path}: malformed population file ({exc})") from None
    if len(idx) != count or idx != sorted(set(idx)):
        raise ValueError(f"{path}: infected indices inconsistent with header")
    return population_from_indices(n, idx, f=f, seed=seed)
