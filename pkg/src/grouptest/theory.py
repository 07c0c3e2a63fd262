"""Closed-form quantities for pooled testing at prevalence ``f``.

All functions are pure and work in double precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

K_SCAN_MAX = 64


def check_prevalence(f: float) -> float:
    f = float(f)
    if not (0.0 < f < 1.0) or math.isnan(f):
        raise ValueError(f"prevalence must lie strictly inside (0, 1), got {f!r}")
    return f


def round_half_up(x: float) -> int:
    """Nearest integer with ties going up, clamped to at least 1."""
    return max(1, int(math.floor(x + 0.5)))


def entropy_bound(f: float, n: int = 1) -> float:
    """Shannon information (bits) in the infection pattern of ``n`` subjects.

    Every binary test yields at most one bit, so this is a lower bound on
    the expected number of tests of any identification procedure.
    """
    f = check_prevalence(f)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return n * (-f * math.log2(f) - (1.0 - f) * math.log2(1.0 - f))


def optimal_pool_size(f: float) -> float:
    """Pool size at which a pool is negative with probability exactly 1/2."""
    f = check_prevalence(f)
    return -1.0 / math.log2(1.0 - f)


def optimal_k(f: float) -> float:
    """Real-valued number of groups per subject minimising the expected test count.

    Goes negative for large ``f`` (roughly above 0.29); callers round and
    clamp to 1 via :func:`theory_params`.
    """
    f = check_prevalence(f)
    num = -math.log2(1.0 - f)
    return -math.log2(num / ((1.0 - f) * math.log(2.0)))


def expected_total_tests(f: float, m: int, k: int, n: float, with_retest: bool = True) -> float:
    """Expected tests for the group-coding method.

    First pass costs ``n*k/m``; the retest pass adds one individual test per
    true positive plus one per healthy subject whose ``k`` groups all came
    back positive (probability ``2**-k`` at the design operating point).
    """
    f = check_prevalence(f)
    if m < 1 or k < 1 or n < 1:
        raise ValueError(f"need m, k, n >= 1 (got m={m}, k={k}, n={n})")
    first = k / m
    if not with_retest:
        return n * first
    return n * (first + f + (1.0 - f) * 2.0 ** (-k))


def verify_k_optimality(f: float, k_max: int = K_SCAN_MAX) -> int:
    """Brute-force integer argmin of the retest cost over k in [1, k_max]."""
    f = check_prevalence(f)
    m = round_half_up(optimal_pool_size(f))
    costs = [expected_total_tests(f, m, k, 1, with_retest=True) for k in range(1, k_max + 1)]
    return 1 + min(range(len(costs)), key=costs.__getitem__)


@dataclass(frozen=True)
class TheoryParams:
    f: float
    m_exact: float
    m: int
    k_exact: float
    k: int
    bits_per_subject: float
    expected_cost: float
    first_pass_cost: float

    @property
    def degenerate(self) -> bool:
        # one subject per pool: pooling buys nothing
        return self.m == 1


def theory_params(f: float) -> TheoryParams:
    f = check_prevalence(f)
    m_exact = optimal_pool_size(f)
    k_exact = optimal_k(f)
    m = round_half_up(m_exact)
    k = round_half_up(k_exact)
    return TheoryParams(
        f=f,
        m_exact=m_exact,
        m=m,
        k_exact=k_exact,
        k=k,
        bits_per_subject=entropy_bound(f, 1),
        expected_cost=expected_total_tests(f, m, k, 1, with_retest=True),
        first_pass_cost=expected_total_tests(f, m, k, 1, with_retest=False),
    )
