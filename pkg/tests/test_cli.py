import json
import subprocess
import sys

import pytest

from aoisim.cli import main
from aoisim.harness import read_csv


def test_lower_bound_command(capsys):
    assert main(["lower-bound", "--p", "0.1", "--q", "0.5", "--hops", "4"]) == 0
    assert capsys.readouterr().out.strip() == "17.5000"


def test_lower_bound_bad_input(capsys):
    assert main(["lower-bound", "--p", "0", "--q", "0.5", "--hops", "4"]) == 2
    assert "error" in capsys.readouterr().err


def test_run_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"network": 1, "rate": 0.1, "slots": 100, "trials": 2}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--policy", "BP-D", "--slots", "80", "--out", str(out), "--trace"]) == 0
    rows = read_csv(out / "summary.csv")
    assert [r["policy"] for r in rows] == ["BP-D"] * 5
    assert (out / "summary.txt").read_text().startswith("policy")
    trace = (out / "trace.csv").read_text().splitlines()
    assert len(trace) == 1 + 80 * 5
    assert "BP-D" in capsys.readouterr().out


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_run_invalid_topology(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"flows": [{"id": "a", "path": [1, 1]}]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_reproduce_table_small(tmp_path):
    assert main(["reproduce-table", "5", "--slots", "50", "--trials", "2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "table5.csv")
    assert len(rows) == 5 * 5
    assert rows[0]["policy"].startswith("SDSPD")


def test_unknown_table_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["reproduce-table", "9"])
    assert exc.value.code != 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aoisim", "lower-bound", "--p", "0.13", "--q", "0.5", "--hops", "4"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "15.1923"
