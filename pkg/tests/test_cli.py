import json
import subprocess
import sys

import pytest

from rotund.cli import OUTPUT_ENV, dispatch
from rotund.measure import SimpleFunction


def run_cli(capsys, *argv):
    code = dispatch(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_watson_threshold(capsys):
    code, out, _ = run_cli(capsys, "watson", "--threshold")
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["result"]["alpha_bar"] - 0.340537329550999142833) <= 1e-9
    assert doc["config"]["threshold"] is True
    assert "route_i" in doc["metadata"]


def test_watson_alpha_and_density(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    code, out, _ = run_cli(capsys, "watson", "--alpha", "0.2", "--density-csv", "p.csv", "--grid", "3")
    assert code == 0
    assert json.loads(out)["result"]["attained"] is True
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 28
    code, out, _ = run_cli(capsys, "watson", "--alpha", "0.36")
    assert code == 0 and json.loads(out)["result"]["attained"] is False


def test_maxent_solve_and_primal_csv(capsys, tmp_path):
    path = tmp_path / "x.csv"
    code, out, _ = run_cli(capsys, "maxent", "solve", "--problem", "builtin:bs_mean", "--primal-csv", str(path))
    assert code == 0
    res = json.loads(out)["result"]
    assert res["V"] == pytest.approx(-1.0, abs=1e-12) and res["converged"]
    x = SimpleFunction.from_csv(path.read_text())
    assert x.space.n_cells == 64


def test_maxent_solve_from_file(capsys, tmp_path):
    from rotund.maxent import load_problem
    p = tmp_path / "p.json"
    p.write_text(json.dumps(load_problem("builtin:fd_window").to_dict()))
    code, out, _ = run_cli(capsys, "maxent", "solve", "--problem", str(p), "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config:") and lines[1].startswith("# metadata:")
    assert lines[2] == "lo,hi,x" and len(lines) == 67


def test_exit_codes(capsys):
    assert run_cli(capsys, "maxent", "solve", "--problem", "builtin:bs_infeasible")[0] == 3
    assert run_cli(capsys, "maxent", "solve", "--problem", "builtin:trig_demo", "--method", "gradient",
                   "--max-iter", "2")[0] == 2
    assert run_cli(capsys, "lab", "preserve", "--check", "I", "--family", "spike_preservation",
                   "--integrand", "burg")[0] == 4
    assert run_cli(capsys, "lab", "run", "--family", "nope", "--integrand", "burg")[0] == 1
    assert run_cli(capsys, "lab", "run", "--family", "incompat", "--integrand", "nope")[0] == 1
    assert run_cli(capsys, "watson")[0] == 1
    assert run_cli(capsys, "watson", "--w", "2")[0] == 1
    assert run_cli(capsys, "bogus")[0] == 1
    assert run_cli(capsys, "maxent", "solve", "--problem", "/no/such/file.json")[0] == 1


def test_lab_run_csv(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    code, out, _ = run_cli(capsys, "lab", "run", "--family", "exlbr2", "--integrand", "burg",
                           "--schedule", "10,100,1000", "--csv", "rows.csv", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert [r["n"] for r in doc["result"]["rows"]] == [10, 100, 1000]
    assert (tmp_path / "rows.csv").read_text().startswith("n,value,limit_value")


def test_lab_run_defaults_to_csv(capsys):
    import csv
    import io
    import math
    code, out, _ = run_cli(capsys, "lab", "run", "--family", "incompat", "--integrand", "burg_plus_linear",
                           "--schedule", "10,100")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# config:") and lines[1].startswith("# metadata:")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[2:]))))
    for r in rows:
        n = int(r["n"])
        assert abs(float(r["value"]) - (-math.log(n) / n + 2 - 1 / n)) <= 1e-12


def test_lab_preserve_and_probe(capsys):
    code, out, _ = run_cli(capsys, "lab", "preserve", "--check", "II", "--family", "spike_preservation",
                           "--integrand", "clipped_norm")
    assert code == 0 and json.loads(out)["result"]["passed"]
    code, out, _ = run_cli(capsys, "lab", "probe", "--family", "exlbr2", "--integrand", "burg")
    assert code == 0 and json.loads(out)["result"]["status"] == "not applicable"


def test_rotundity_commands(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "rotundity", "classify", "--integrand", "fermi_dirac")
    assert code == 0 and json.loads(out)["result"]["strongly_rotund"] is True
    code, out, _ = run_cli(capsys, "rotundity", "suite", "--integrand", "burg", "--json", str(tmp_path / "s.json"))
    assert code == 0
    saved = json.loads((tmp_path / "s.json").read_text())
    assert saved["result"] == json.loads(out)["result"]


def test_integrands_commands(capsys):
    code, out, _ = run_cli(capsys, "integrands", "list")
    assert code == 0 and len(json.loads(out)["result"]["integrands"]) == 11
    code, out, _ = run_cli(capsys, "integrands", "eval", "burg", "--at", "1,2")
    assert code == 0
    pts = json.loads(out)["result"]["points"]
    assert pts[0]["value"] == 0.0 and pts[1]["conj_value"] == "inf"
    code, out, _ = run_cli(capsys, "integrands", "show", "log_det", "--d", "3", "--format", "table")
    assert code == 0 and "result.name" in out


def test_output_is_byte_identical():
    cmd = [sys.executable, "-m", "rotund.cli", "maxent", "solve", "--problem", "builtin:bs_trig"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a


def test_console_script_usage_exit_code():
    r = subprocess.run([sys.executable, "-m", "rotund.cli", "lab", "run"], capture_output=True)
    assert r.returncode == 1 and b"required" in r.stderr
