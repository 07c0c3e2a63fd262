import csv
import io

import numpy as np
import pytest

from grouptest import cli
from grouptest.groupcode import (
    decode,
    decode_bruteforce_oracle,
    first_pass,
    format_decode_output,
    format_results,
    parse_design,
)
from grouptest.testbed import population_from_indices


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_row(capsys):
    code, out, err = run(["bounds", "--f", "0.01", "--n", "100000"], capsys)
    assert code == 0
    assert "# config:" in err
    row = next(csv.DictReader(io.StringIO(out)))
    assert (row["m"], row["k"]) == ("69", "6")
    assert float(row["bits_per_subject"]) == pytest.approx(0.0808, abs=1e-4)


def test_bounds_multiple_and_text(capsys):
    code, out, _ = run(["bounds", "--f", "0.01,0.001", "--f", "0.05", "--format", "text"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 3
    assert "m=693" in out.splitlines()[1]


def test_bounds_degenerate_warns(capsys):
    code, out, err = run(["bounds", "--f", "0.5"], capsys)
    assert code == 0
    assert "degenerate" in err
    assert next(csv.DictReader(io.StringIO(out)))["m"] == "1"


@pytest.mark.parametrize("argv", [
    ["bounds", "--f", "1.5"],
    ["bounds", "--f", "abc"],
    ["simulate", "--method", "dnc", "--f", "0.01", "--fn-rate", "2"],
    ["simulate", "--method", "magic", "--f", "0.01"],
    ["plan", "--n", "0", "--f", "0.01"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_plan_paper_scale(tmp_path, capsys):
    out_file = tmp_path / "plan.txt"
    code, out, _ = run(["plan", "--n", "100000", "--f", "0.01", "--seed", "1", "--out", str(out_file)], capsys)
    assert code == 0
    assert "n_groups=8696" in out
    design = parse_design(out_file.read_text())
    assert design.n_groups == 8696 and design.k == 6


def test_plan_low_prevalence(tmp_path, capsys):
    out_file = tmp_path / "plan.txt"
    assert run(["plan", "--n", "100000", "--f", "0.001", "--seed", "1", "--out", str(out_file)], capsys)[0] == 0
    assert "n_groups=1299" in out_file.read_text()


def test_plan_single_subject(capsys):
    code, out, err = run(["plan", "--n", "1", "--f", "0.01"], capsys)
    assert code == 0
    design = parse_design(out)
    assert design.n == 1 and design.group_sizes.tolist() == [1] * design.k
    assert "n_groups=6" in err


def test_plan_infeasible_exit_3(capsys):
    code, _, err = run(["plan", "--n", "10", "--f", "0.3"], capsys)
    assert code == 3
    assert "C(n_groups" in err


def test_simulate_individual(capsys):
    code, out, _ = run(["simulate", "--method", "individual", "--f", "0.01", "--n", "1000", "--trials", "2"], capsys)
    assert code == 0
    last = list(csv.reader(io.StringIO(out)))[-1]
    assert last[0] == "summary" and float(last[6]) == 1.0


def test_simulate_gc_no_retest(capsys):
    code, out, _ = run(["simulate", "--method", "gc", "--f", "0.001", "--n", "100000", "--no-retest",
                        "--trials", "2"], capsys)
    assert code == 0
    last = list(csv.reader(io.StringIO(out)))[-1]
    assert float(last[6]) == pytest.approx(0.013, abs=0.0005)


def test_simulate_infeasible_exit_3(capsys):
    assert run(["simulate", "--method", "gc", "--f", "0.3", "--n", "10", "--trials", "1"], capsys)[0] == 3


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--method", "dnc", "--f", "0.02", "--n", "5000", "--trials", "3", "--seed", "9",
            "--fn-rate", "0.01"]
    assert run(argv + ["--out", str(a)], capsys)[0] == 0
    assert run(argv + ["--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.fixture
def tiny_plan(tmp_path, capsys):
    path = tmp_path / "design.txt"
    assert run(["plan", "--n", "10", "--f", "0.2", "--m", "4", "--k", "2", "--seed", "3", "--out", str(path)], capsys)[0] == 0
    return path


def test_decode_all_negative(tiny_plan, tmp_path, capsys):
    design = parse_design(tiny_plan.read_text())
    res = tmp_path / "res.csv"
    res.write_text(format_results(np.zeros(design.n_groups, dtype=bool)))
    out = tmp_path / "pos.txt"
    assert run(["decode", "--design", str(tiny_plan), "--results", str(res), "--out", str(out)], capsys)[0] == 0
    assert out.read_text() == ""


def test_decode_hand_made_results_match_oracle(tiny_plan, tmp_path, capsys):
    design = parse_design(tiny_plan.read_text())
    infected = [2, 7]
    results = np.zeros(design.n_groups, dtype=bool)
    for s in infected:
        results[design.signatures[s]] = True
    res = tmp_path / "res.csv"
    res.write_text(format_results(results))
    code, out, _ = run(["decode", "--design", str(tiny_plan), "--results", str(res)], capsys)
    assert code == 0
    got = {int(line.split(",")[0]) for line in out.splitlines()}
    assert got == decode_bruteforce_oracle(design, infected)
    assert all(line.endswith(",firstpass") for line in out.splitlines())


def test_decode_with_retest_flags(tiny_plan, tmp_path, capsys):
    design = parse_design(tiny_plan.read_text())
    results = np.zeros(design.n_groups, dtype=bool)
    results[design.signatures[4]] = True
    res = tmp_path / "res.csv"
    res.write_text(format_results(results))
    retest = tmp_path / "retest.csv"
    retest.write_text("4,1\n")
    code, out, _ = run(["decode", "--design", str(tiny_plan), "--results", str(res),
                        "--retest-results", str(retest)], capsys)
    assert code == 0
    assert "4,confirmed" in out.splitlines()


def test_decode_missing_group_exit_4(tiny_plan, tmp_path, capsys):
    design = parse_design(tiny_plan.read_text())
    lines = format_results(np.zeros(design.n_groups, dtype=bool)).splitlines()
    res = tmp_path / "res.csv"
    res.write_text("\n".join(lines[:2] + lines[3:]) + "\n")
    code, _, err = run(["decode", "--design", str(tiny_plan), "--results", str(res)], capsys)
    assert code == 4
    assert "missing group id(s) 2" in err


def test_decode_malformed_exit_2(tiny_plan, tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("n=banana\n")
    res = tmp_path / "res.csv"
    res.write_text("0,1\n")
    assert run(["decode", "--design", str(bad), "--results", str(res)], capsys)[0] == 2
    assert run(["decode", "--design", str(tiny_plan), "--results", str(tmp_path / "nope")], capsys)[0] == 2
    res.write_text("0,maybe\n")
    assert run(["decode", "--design", str(tiny_plan), "--results", str(res)], capsys)[0] == 2


def test_plan_decode_round_trip(tmp_path, capsys):
    plan = tmp_path / "plan.txt"
    assert run(["plan", "--n", "3000", "--f", "0.01", "--seed", "5", "--out", str(plan)], capsys)[0] == 0
    design = parse_design(plan.read_text())
    pop = population_from_indices(3000, [10, 500, 2999], f=0.01, seed=5)
    results, _ = first_pass(pop, design)
    res = tmp_path / "res.csv"
    res.write_text(format_results(results))
    out = tmp_path / "pos.txt"
    assert run(["decode", "--design", str(plan), "--results", str(res), "--out", str(out)], capsys)[0] == 0
    assert out.read_bytes() == format_decode_output(decode(design, results)).encode()
