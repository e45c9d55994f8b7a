import csv
import json
import subprocess
import sys

import pytest

from dg0lab.cli import main


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, command, text, *extra):
    out = tmp_path / "out"
    code = main([command, "--config", write(tmp_path, text), "--out", str(out), *extra])
    return code, out


BASIC = """
[problem]
id = "heat-lipschitz"
[grid]
M = 8
[mesh]
n = 16
"""


def test_validate_corpus_problem_ok(tmp_path):
    code, out = run(tmp_path, "validate", BASIC)
    assert code == 0
    assert json.loads((out / "validate.json").read_text())["all_ok"] is True


def test_validate_sqrt_field_is_a_violation(tmp_path):
    code, out = run(tmp_path, "validate", '[problem]\nid = "heat-sqrt"\n')
    assert code == 2
    assert json.loads((out / "validate.json").read_text())["modulus"]["passes"] is False


@pytest.mark.parametrize("text", [
    '[problem]\nfield = "nope"\nrhs = "zero"\nu0 = "zero"\n',
    '[bogus]\nx = 1\n',
    '[problem]\nid = "heat-sine"\ncolour = "red"\n',
    '[problem\nid = ',
])
def test_config_errors(tmp_path, text):
    assert run(tmp_path, "solve", text)[0] == 3


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 3


def test_solve_zero_problem_reports_zeros(tmp_path):
    code, out = run(tmp_path, "solve", '[problem]\nid = "zero"\n[grid]\nM = 4\n[mesh]\nn = 8\n')
    assert code == 0
    rows = list(csv.DictReader(open(out / "solution_n8_M4.csv")))
    assert all(float(r["norm_u_m"]) == 0 and float(r["norm_jump"]) == 0 for r in rows)


def test_solve_csv_has_one_row_per_interval_and_is_deterministic(tmp_path):
    code, out = run(tmp_path, "solve", BASIC)
    assert code == 0
    first = (out / "solution_n16_M8.csv").read_bytes()
    assert len(first.decode().strip().splitlines()) == 9
    code, _ = run(tmp_path, "solve", BASIC, "--jobs", "2")
    assert (out / "solution_n16_M8.csv").read_bytes() == first


def test_operators_autonomous_contraction_is_zero(tmp_path):
    text = ('[problem]\nid = "heat-autonomous"\n[grid]\nM = 6\n[mesh]\nn = 8\n'
            '[operators]\nmu = [0, 4]\naudits = ["contraction"]\n')
    code, out = run(tmp_path, "operators", text)
    assert code == 0
    rows = list(csv.DictReader(open(out / "contraction.csv")))
    assert rows and all(float(r["norm"]) == 0 for r in rows)
    assert sorted({r["mu"] for r in rows}) == ["0", "4"]


def test_operators_one_block_per_mu(tmp_path):
    text = BASIC + '[operators]\nmu = [1, 4, 16]\n'
    code, out = run(tmp_path, "operators", text)
    assert code == 0
    summary = json.loads((out / "operators_summary.json").read_text())
    assert set(summary["contraction"]) == set(summary["resolvent"]) == {"1", "4", "16"}


def test_operators_budget_overflow(tmp_path):
    text = '[problem]\nid = "heat-sine"\n[grid]\nM = 64\n[mesh]\nn = 128\n'
    assert run(tmp_path, "operators", text)[0] == 4


def test_convergence_three_levels(tmp_path):
    text = ('[problem]\nid = "heat-sine"\n[convergence]\nlines = [{name = "h", variable = "h", '
            'problem = "steady-sine", levels = [[4, 4], [8, 4], [16, 4]]}]\n')
    code, out = run(tmp_path, "convergence", text)
    assert code == 0
    assert len((out / "convergence.csv").read_text().strip().splitlines()) == 4
    assert "h" in json.loads((out / "orders.json").read_text())


def test_convergence_reproduction_rows_flagged(tmp_path):
    text = ('[problem]\nid = "steady-poly"\n[mesh]\ndegree = 2\n[analysis]\np = ["inf"]\n'
            '[convergence]\nlines = [{name = "r", variable = "h", problem = "steady-poly", '
            'degree = 2, levels = [[4, 2], [8, 2]]}]\n')
    code, out = run(tmp_path, "convergence", text)
    assert code == 0
    rows = list(csv.DictReader(open(out / "convergence.csv")))
    assert all(r["zero_error"] == "True" for r in rows)
    assert "r" not in json.loads((out / "orders.json").read_text())


def test_bestapprox_pairs_levels(tmp_path):
    text = ('[problem]\nid = "heat-sine"\n[grid]\nM = [8, 16]\n[mesh]\nn = [4, 8]\n'
            '[analysis]\np = [2, "inf"]\n')
    code, out = run(tmp_path, "bestapprox", text)
    assert code == 0
    rows = list(csv.DictReader(open(out / "bestapprox.csv")))
    assert [(r["n"], r["M"], r["p"]) for r in rows] == [
        ("4", "8", "2"), ("4", "8", "inf"), ("8", "16", "2"), ("8", "16", "inf")]


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, BASIC)
    res = subprocess.run([sys.executable, "-m", "dg0lab", "validate", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True)
    assert res.returncode == 0
