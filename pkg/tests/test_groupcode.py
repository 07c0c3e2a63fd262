import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grouptest.groupcode import (
    DesignFormatError,
    DesignInfeasible,
    GroupMismatch,
    build_balanced_design,
    build_design,
    check_design,
    decode,
    decode_bruteforce_oracle,
    first_pass,
    format_decode_output,
    format_design,
    format_results,
    parse_design,
    parse_results,
    retest_pass,
    run_group_coding,
)
from grouptest.testbed import PERFECT, TestLedger, TestModel, generate_population, population_from_indices


def assert_design_invariants(d):
    check_design(d)
    sizes = d.group_sizes
    assert sizes.sum() == d.n * d.k
    assert sizes.max() - sizes.min() <= 1
    assert math.comb(d.n_groups, d.k) >= d.n
    counts = np.bincount(d.signatures.ravel(), minlength=d.n_groups)
    assert np.array_equal(counts, sizes)


@pytest.mark.parametrize("f, groups, k", [(1e-2, 8696, 6), (1e-3, 1299, 9)])
def test_paper_scale_designs(f, groups, k):
    d = build_design(100_000, f, 1)
    assert (d.n_groups, d.k) == (groups, k)
    assert_design_invariants(d)
    assert abs(d.group_sizes.mean() - d.m) < 1


def test_single_subject_design():
    d = build_design(1, 0.01, 0)
    assert d.n_groups == 6 and d.k == 6
    assert d.group_sizes.tolist() == [1] * 6
    assert_design_invariants(d)


def test_design_is_deterministic():
    a = build_design(2000, 0.02, 5)
    b = build_design(2000, 0.02, 5)
    assert np.array_equal(a.signatures, b.signatures)
    assert format_design(a) == format_design(b)
    assert not np.array_equal(a.signatures, build_design(2000, 0.02, 6).signatures)


def test_infeasible_design():
    with pytest.raises(DesignInfeasible, match="C\\(n_groups"):
        build_balanced_design(10, 2, 1, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 600), st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**32))
def test_design_invariants_property(n, m, k, seed):
    try:
        d = build_balanced_design(n, m, k, seed)
    except DesignInfeasible:
        groups = max(k, int(math.floor(n * k / m + 0.5)))
        if math.comb(groups, k) < n:
            return
        # the greedy may give up only when signatures are nearly exhausted
        assert math.comb(groups, k) < 4 * n
        return
    assert_design_invariants(d)


def test_first_pass_all_healthy():
    d = build_design(1000, 0.01, 0)
    pop = population_from_indices(1000, [], f=0.01)
    ledger = TestLedger()
    results, _ = first_pass(pop, d, PERFECT, np.random.default_rng(0), ledger)
    assert results.shape == (d.n_groups,) and not results.any()
    assert ledger.tests_performed == d.n_groups
    assert decode(d, results).size == 0


def test_first_pass_half_positive_at_design_point():
    d = build_design(100_000, 0.01, 3)
    pop = generate_population(100_000, 0.01, 3)
    results, _ = first_pass(pop, d)
    assert abs(results.mean() - 0.5) <= 0.02


def test_single_infected_lights_its_groups_only():
    d = build_design(3000, 0.01, 2)
    s = 1234
    pop = population_from_indices(3000, [s], f=0.01)
    results, _ = first_pass(pop, d)
    assert sorted(np.flatnonzero(results).tolist()) == sorted(d.signatures[s].tolist())
    assert decode(d, results).tolist() == [s]


def test_decode_length_mismatch():
    d = build_design(100, 0.05, 0)
    with pytest.raises(ValueError):
        decode(d, np.zeros(d.n_groups + 1, dtype=bool))


def test_first_pass_count_independent_of_infections():
    d = build_design(5000, 0.01, 0)
    counts = {first_pass(generate_population(5000, f, s), d)[1].tests_performed
              for f in (0.001, 0.01, 0.2) for s in range(3)}
    assert counts == {d.n_groups}


@pytest.mark.parametrize("seed", range(20))
def test_perfect_pipeline_exact(seed):
    pop = generate_population(10_000, 0.01, seed)
    d = build_design(10_000, 0.01, seed)
    r = run_group_coding(pop, d, PERFECT, with_retest=True)
    assert np.isin(pop.infected_indices, r.first_pass_positives).all()
    assert np.array_equal(r.confirmed_positives, pop.infected_indices)
    assert r.false_positive_count == r.first_pass_positives.size - pop.infected_count
    assert r.ledger.tests_performed == d.n_groups + r.first_pass_positives.size


def test_retest_pass_examples():
    pop = population_from_indices(50, [3, 9, 20])
    ledger = TestLedger()
    got = retest_pass(pop, np.array([1, 3, 9, 30]), PERFECT, np.random.default_rng(0), ledger)
    assert got.tolist() == [3, 9]
    assert ledger.tests_performed == 4
    assert retest_pass(pop, np.array([], dtype=int), PERFECT, np.random.default_rng(0), ledger).size == 0
    assert ledger.tests_performed == 4


def test_oracle_empty():
    d = build_design(200, 0.05, 1)
    assert decode_bruteforce_oracle(d, []) == set()


def test_decode_matches_oracle_random_instances():
    for seed in range(100):
        pop = generate_population(500, 0.02, seed)
        d = build_design(500, 0.02, seed)
        results, _ = first_pass(pop, d)
        assert set(decode(d, results).tolist()) == decode_bruteforce_oracle(d, pop.infected_indices)


def test_false_positive_rate_vs_overlap_free_approximation():
    # per healthy subject: each of its k groups must catch an infected among the other m-1 members
    f, n = 0.01, 5000
    fp = healthy = 0
    for seed in range(200):
        pop = generate_population(n, f, seed)
        d = build_design(n, f, seed)
        found = decode_bruteforce_oracle(d, pop.infected_indices)
        fp += len(found - set(pop.infected_indices.tolist()))
        healthy += n - pop.infected_count
    approx = (1 - (1 - f) ** (d.m - 1)) ** d.k
    rate = fp / healthy
    assert approx / 2 <= rate <= approx * 2


def test_noisy_false_negative_amplification():
    f, p = 1e-2, 0.01
    missed = infected = 0
    seed = 0
    while infected < 10_000:
        pop = generate_population(50_000, f, seed)
        d = build_design(50_000, f, seed)
        r = run_group_coding(pop, d, TestModel(p=p), with_retest=False)
        truth = pop.infected_indices
        missed += np.setdiff1d(truth, r.first_pass_positives).size
        infected += truth.size
        seed += 1
    assert d.k == 6
    assert abs(missed / infected - (1 - (1 - p) ** 6)) <= 0.008


def test_design_file_roundtrip():
    d = build_design(300, 0.03, 9)
    text = format_design(d)
    assert text.splitlines()[:3] == ["n=300", f"n_groups={d.n_groups}", f"k={d.k}"]
    back = parse_design(text)
    assert np.array_equal(np.sort(back.signatures, axis=1), np.sort(d.signatures, axis=1))
    assert format_design(back) == text


@pytest.mark.parametrize("mutate, exc", [
    (lambda t: t.replace("k=", "k=x"), DesignFormatError),
    (lambda t: "\n".join(t.splitlines()[:-1]) + "\n", DesignFormatError),
    (lambda t: t.replace("n_groups=", "bogus="), DesignFormatError),
])
def test_design_file_malformed(mutate, exc):
    d = build_design(100, 0.05, 0)
    with pytest.raises(exc):
        parse_design(mutate(format_design(d)))


def test_results_file_roundtrip_and_mismatch():
    res = np.array([True, False, True, True])
    text = format_results(res)
    assert text == "0,1\n1,0\n2,1\n3,1\n"
    assert parse_results(text, 4).tolist() == res.tolist()
    with pytest.raises(GroupMismatch, match="missing group id\\(s\\) 2"):
        parse_results("0,1\n1,0\n3,1\n", 4)
    with pytest.raises(GroupMismatch, match="unknown"):
        parse_results(text + "7,0\n", 4)
    with pytest.raises(DesignFormatError):
        parse_results("0,2\n", 1)


def test_decode_output_flags():
    assert format_decode_output([2, 5, 7], confirmed=[5]) == "2,firstpass\n5,confirmed\n7,firstpass\n"
    assert format_decode_output([]) == ""
