import csv
import json
import subprocess
import sys

import pytest

from relaydof.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_onehop_trials(capsys):
    code, out, _ = run(["simulate", "--scheme", "onehop-33", "--layers", "3", "--users", "3",
                        "--rounds", "1", "--trials", "5", "--seed", "10"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1
    assert [t["seed"] for t in doc["trials"]] == [10, 11, 12, 13, 14]
    assert all(t["messages"] == 9 and t["slots"] == 9 and t["dof"] == "1/1" for t in doc["trials"])
    agg = doc["aggregate"]
    assert agg["all_decoded"] and agg["asymptote"] == "3/2" and agg["gap"] == "1/2"
    assert agg["max_residual"] < 1e-6


def test_simulate_k2_slots(capsys):
    code, out, _ = run(["simulate", "--scheme", "onehop-k2", "--users", "2", "--layers", "4",
                        "--rounds", "2", "--trials", "2"], capsys)
    assert code == 0
    assert all(t["slots"] == 12 for t in json.loads(out)["trials"])


def test_global_k2_under_one_hop_reports_csit_error(capsys):
    code, out, _ = run(["simulate", "--scheme", "global-k2", "--users", "2", "--feedback", "onehop"], capsys)
    assert code != 0
    err = json.loads(out)["error"]
    assert err["kind"] == "csit-access" and err["slot"] == 3


def test_config_error_is_structured(capsys):
    code, _, err = run(["simulate", "--scheme", "global-k2", "--users", "3"], capsys)
    assert code == 2 and json.loads(err)["error"]["kind"] == "config"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scheme": "onehop-k2", "users": 2, "layers": 5, "rounds": 3, "trials": 2}))
    code, out, _ = run(["simulate", "--config", str(cfg), "--layers", "3"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["config"]["layers"] == 3 and doc["config"]["rounds"] == 3
    assert doc["config"]["feedback"] == "onehop"


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"lay": 3}))
    code, _, err = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2 and "lay" in err


def test_output_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / f"r{i}.json" for i in range(2)]
    for p in paths:
        assert main(["simulate", "--scheme", "global-k2", "--users", "2", "--rounds", "4",
                     "--trials", "3", "--seed", "5", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_csv_matches_json(tmp_path):
    base = ["simulate", "--scheme", "onehop-33", "--layers", "4", "--rounds", "2", "--trials", "3"]
    j, c = tmp_path / "r.json", tmp_path / "r.csv"
    assert main(base + ["--out", str(j)]) == 0
    assert main(base + ["--format", "csv", "--out", str(c)]) == 0
    trials = json.loads(j.read_text())["trials"]
    with open(c) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(trials)
    for row, t in zip(rows, trials):
        assert row["dof"] == t["dof"]
        for key in ("seed", "slots", "messages", "redraws"):
            assert int(row[key]) == t[key]
        for key in ("dof_decimal", "max_residual"):
            assert float(row[key]) == t[key]


def test_bounds_table(capsys):
    code, out, _ = run(["bounds", "--users", "2", "3", "10"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[1].split()[:6] == ["2", "6/5", "1.20000", "4/3", "1.33333", "4/3"]
    assert lines[2].split()[:6] == ["3", "5/4", "1.25000", "3/2", "1.50000", "18/11"]
    assert lines[3].split()[5] == "25200/7381"  # 10 / H_10, H_10 = 7381/2520


def test_bounds_json(capsys):
    code, out, _ = run(["bounds", "--k-max", "4", "--format", "json"], capsys)
    rows = json.loads(out)["bounds"]
    assert [r["upper"] for r in rows] == ["4/3", "18/11", "48/25"]


def test_verify_passes(capsys):
    code, out, _ = run(["verify", "--scheme", "onehop-33", "--layers", "3", "--rounds", "2",
                        "--seed", "7"], capsys)
    assert code == 0
    assert "FAIL" not in out and out.strip().endswith("all invariants hold")
    for name in ("formability", "knowledge", "gamma-pairs", "symbolic-numeric", "dof-count"):
        assert any(line.split()[:2] == [name, "PASS"] for line in out.splitlines())


def test_verify_fault_injection(capsys):
    code, out, _ = run(["verify", "--inject-fault"], capsys)
    assert code != 0
    assert any(line.split()[:2] == ["formability", "FAIL"] for line in out.splitlines())


def test_verify_noise_at_very_high_power(capsys):
    code, out, _ = run(["verify", "--noise", "--power", "1e10", "--tol", "1e-2", "--seed", "7",
                        "--rounds", "2"], capsys)
    assert code == 0, out


@pytest.mark.xfail(strict=True, reason="at P = 1e6 channel inversion amplifies receiver noise "
                                       "beyond a 1e-2 relative decode error")
def test_verify_noise_at_default_power(capsys):
    code, out, _ = run(["verify", "--noise", "--tol", "1e-2", "--seed", "7", "--rounds", "2"], capsys)
    assert code == 0, out


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "relaydof.cli", "bounds", "--k-max", "2"],
                          capture_output=True, text=True, check=True)
    assert "6/5" in proc.stdout
