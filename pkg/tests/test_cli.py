import csv
import io
import json
import subprocess
import sys

import pytest

from nkgame.cli import flatten, main, num, render

SPOT = ["--pop", "1*rejector,2*random", "--k", "2"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_json(capsys):
    code, out, _ = run(capsys, "simulate", *SPOT, "--trials", "20000", "--seed", "3")
    assert code == 0
    d = json.loads(out)
    assert d["schema_version"] == 1 and d["command"] == "simulate"
    lo, hi = d["ci99"]
    assert lo <= 5 / 12 <= hi
    assert d["exact"]["p_decision"] == pytest.approx(5 / 12, abs=1e-11)
    assert d["bounds"]["random_decision_bound"]["value"] == 0.5
    assert d["bounds"]["majority_no_decision_bound"]["value"] is None
    assert d["bounds"]["majority_no_decision_bound"]["note"].startswith("n/a")
    assert d["truncation_rate"] == 0.0


def test_simulate_is_repeatable(capsys):
    _, a, _ = run(capsys, "simulate", *SPOT, "--trials", "3000", "--seed", "9")
    _, b, _ = run(capsys, "simulate", *SPOT, "--trials", "3000", "--seed", "9")
    _, c, _ = run(capsys, "simulate", *SPOT, "--trials", "3000", "--seed", "10")
    assert a == b and a != c


def test_csv_and_json_carry_the_same_values(capsys):
    _, js, _ = run(capsys, "simulate", *SPOT, "--trials", "2000")
    _, cs, _ = run(capsys, "simulate", *SPOT, "--trials", "2000", "--format", "csv")
    flat = flatten(json.loads(js))
    rows = list(csv.reader(io.StringIO(cs)))
    assert len(rows) == 2 and rows[0] == list(flat)
    for key, cell in zip(rows[0], rows[1]):
        v = flat[key]
        if v is None:
            assert cell == ""
        elif isinstance(v, bool):
            assert cell == ("true" if v else "false")
        elif isinstance(v, (int, float)):
            assert float(cell) == pytest.approx(v, rel=1e-11)
        else:
            assert cell == v


def test_simulate_records_file(capsys, tmp_path):
    path = tmp_path / "trials.csv"
    code, _, _ = run(capsys, "simulate", *SPOT, "--trials", "50", "--records", str(path))
    assert code == 0
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 50 and rows[0]["trial"] == "0"
    for r in rows:
        assert int(r["decided"]) + int(r["frozen"]) + int(r["truncated"]) == 1


def test_simulate_out_file(capsys, tmp_path):
    path = tmp_path / "s.json"
    code, out, _ = run(capsys, "simulate", *SPOT, "--trials", "100", "--out", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["config"]["trials"] == 100


def test_simulate_truncation_exit_code(capsys):
    code, out, err = run(capsys, "simulate", "--pop", "1*rejector,1*neutralist", "--k", "2",
                         "--max-steps", "20", "--trials", "100")
    assert code == 2
    assert json.loads(out)["truncation_rate"] == 1.0
    assert "truncated" in err


def test_exact_command(capsys, tmp_path):
    dump = tmp_path / "chain.json"
    code, out, _ = run(capsys, "exact", "--pop", "1*consentor,1*rejector,2*majority", "--k", "3",
                       "--dump-chain", str(dump))
    assert code == 0
    d = json.loads(out)["exact"]
    assert d["p_no_decision"] == pytest.approx(0.5, abs=1e-12)
    assert d["majority_census"] == "pass" and d["states"] == 3
    assert json.loads(dump.read_text())["states"] == [[0], [1], [2]]


def test_exact_sync_geometric(capsys):
    code, out, _ = run(capsys, "exact", "--pop", "10*neutralist", "--k", "5", "--mode", "sync")
    assert code == 0
    d = json.loads(out)["exact"]
    assert d["p_round"] == pytest.approx(319 / 512)
    assert d["expected_rounds"] == pytest.approx(512 / 319)
    assert d["p_decision"] == pytest.approx(1.0)


def test_exact_cap_exit_code(capsys):
    code, _, err = run(capsys, "exact", "--pop", "6*random,6*majority", "--k", "4", "--cap", "10")
    assert code == 3 and "cap" in err


def test_bounds_command(capsys):
    code, out, _ = run(capsys, "bounds", "--pop", "4*consentor,4*majority", "--k", "5")
    assert code == 0
    b = json.loads(out)["bounds"]
    assert b["majority_no_decision_bound"]["value"] == pytest.approx(44 / 64)
    assert b["expected_w0"]["value"] == pytest.approx(22)
    code, out, _ = run(capsys, "bounds", "--pop", "1*consentor,1*rejector,2*majority", "--k", "2")
    b = json.loads(out)["bounds"]
    assert b["majority_no_decision_bound"]["value"] == pytest.approx(14 / 12) and b["majority_no_decision_bound"]["note"] == "vacuous"


def test_bounds_sync_neutralists(capsys):
    code, out, _ = run(capsys, "bounds", "--pop", "10*neutralist", "--k", "5", "--mode", "sync")
    b = json.loads(out)["bounds"]
    assert b["geometric"]["p"] == pytest.approx(319 / 512)
    assert b["normal_round_bounds"]["p_max"] == b["normal_round_bounds"]["p_min"] == pytest.approx(0.5)


@pytest.mark.parametrize("argv", [
    ["simulate", "--pop", "2*wizard", "--k", "1"],
    ["simulate", "--pop", "2*random", "--k", "5"],
    ["simulate", "--pop", "2*random", "--k", "1", "--trials", "0"],
    ["exact", "--pop", "3*random", "--k", "2", "--mode", "sync"],
    ["simulate", "--pop", "2*random"],
    ["bogus"],
])
def test_usage_errors_exit_64(capsys, argv):
    with pytest.raises(SystemExit) as info:
        sys.exit(main(argv))
    assert info.value.code == 64


def test_bad_population_reports_column(capsys):
    code, _, err = run(capsys, "bounds", "--pop", "2*random,3*majorty", "--k", "1")
    assert code == 64
    assert "column 12" in err or "^" in err


def test_verify_small_grid(capsys, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({
        "random_bound": {"n": [3, 4]},
        "majority_bound": {"n": [4, 5]},
        "z_drift": {"n_max": 5},
        "montecarlo": [{"pop": "1*rejector,2*random", "k": 2, "trials": 5000, "seed": 2}],
    }))
    report = tmp_path / "report.csv"
    code, _, err = run(capsys, "verify", "--grid", str(grid), "--out", str(report))
    rows = list(csv.DictReader(report.open()))
    assert code == 0, err
    assert {r["check"] for r in rows} == {"random_bound", "majority_bound", "majority_census", "z_drift", "montecarlo"}
    assert all(r["pass"] == "true" for r in rows)
    assert f"{len(rows)}/{len(rows)} checks passed" in err


def test_verify_reports_failures(capsys, tmp_path, monkeypatch):
    from nkgame import formulas

    monkeypatch.setattr(formulas, "theorem1_bound", lambda n, n_r, k: 0)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"random_bound": {"n": [3]}}))
    code, _, err = run(capsys, "verify", "--grid", str(grid))
    assert code == 1 and "FAILED random_bound" in err


def test_num_rounding():
    assert num(0.1 + 0.2) == 0.3
    assert num(float("inf")) is None and num(None) is None
    assert render({"a": float("nan")}, "json") == '{\n  "a": null\n}\n'


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nkgame", "bounds", *SPOT],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["bounds"]["random_decision_bound"]["value"] == 0.5
