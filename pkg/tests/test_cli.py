import json
import math
import subprocess
import sys

import numpy as np
import pytest

from crvolume.cli import CSV_HEADER, SCHEMA_VERSION, emit_report, main, run_subcommand


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def ball_report():
    code, rep = run_subcommand(["ball-report", "--mesh", "6", "--out", "/dev/null"])
    assert code == 0
    return rep


def test_ball_report_structured(ball_report):
    doc = json.loads(emit_report(ball_report, "structured"))
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["command"] == "ball-report"
    res = doc["results"]
    assert abs(res["renormalized_volume"] - 3 * math.pi**2 / 16) <= 1e-4
    assert abs(res["script_V"] - 1) <= 1e-6 and abs(res["chi"] - 1) <= 2e-4
    assert res["htilde_at_phi_-1"] == pytest.approx(0.6)
    assert "timings" not in doc


def test_table_and_structured_agree(ball_report):
    doc = json.loads(emit_report(ball_report, "structured"))
    table = emit_report(ball_report, "table")
    values = {}
    for line in table.splitlines():
        parts = line.split()
        if len(parts) == 2 and not line.startswith("["):
            values[parts[0]] = parts[1]
    for k, v in doc["results"].items():
        assert float(values[k]) == pytest.approx(v, rel=1e-15, abs=1e-300)
    assert float(values["Scal.mean"]) == pytest.approx(doc["summaries"]["Scal"]["mean"])


def test_csv_dump(ball_report):
    text = emit_report(ball_report, "csv")
    rows = text.strip().splitlines()
    assert rows[0] == ",".join(CSV_HEADER)
    assert len(rows) == 1 + 6**3
    scal = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.allclose(scal, 2.0, atol=1e-12)


def test_structured_output_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["analyze", "--mesh", "4", "--format", "structured", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["analyze", "--mesh", "4", "--format", "structured", "--timings", "--out", str(a)]) == 0
    assert "boundary" in json.loads(a.read_text())["timings"]


def test_analyze_bumped_L_within_uncertainty(capsys):
    code, out, _ = run(capsys, "analyze", "--domain", "bumped_ball(0.05,2)", "--mesh", "8", "--format", "structured")
    assert code == 0
    res = json.loads(out)["results"]
    assert abs(res["L"]) <= res["L_uncertainty"]
    assert abs(res["L"]) <= 1e-4 * res["L_abs_integrand"]


def test_analyze_from_config(tmp_path, capsys):
    cfg = tmp_path / "dom.yaml"
    cfg.write_text(
        "name: my_bump\n"
        "rho: 'abs2(z) + abs2(w) - 1 + delta*re(z^2*conj(w)^2)'\n"
        "params: {delta: 0.05}\n"
        "mesh: [4, 4, 4]\n"
    )
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--format", "structured")
    assert code == 0
    doc = json.loads(out)
    assert doc["parameters"]["mesh"] == [4, 4, 4] and doc["domain"] == "my_bump"


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("rho: 'abs2(z) + + 1'\n")
    code, _, err = run(capsys, "analyze", "--config", str(cfg))
    assert code == 3
    e = json.loads(err)
    assert e["error"] == "config" and e["exit_code"] == 3
    code, _, err = run(capsys, "analyze", "--config", str(tmp_path / "missing.yaml"))
    assert code == 3


def test_anomaly_command(capsys):
    code, out, _ = run(capsys, "anomaly", "--mesh", "6", "--upsilon", "0.2*re(z*conj(w))", "--format", "structured")
    assert code == 0
    res = json.loads(out)["results"]
    assert res["route_difference"] <= 1e-6 * abs(res["full"])


def test_fit_command(tmp_path, capsys):
    eps = -np.geomspace(0.5, 0.05, 24)
    c = (math.pi**2 / 2, math.pi**2 / 2, 0.0, 3 * math.pi**2 / 16)
    vol = c[0] / eps**2 + c[1] / eps + c[2] * np.log(-eps) + c[3] + 0.1 * eps
    path = tmp_path / "samples.txt"
    np.savetxt(path, np.column_stack([eps, vol]), fmt="%.17g")
    code, out, _ = run(capsys, "fit", "--samples", str(path), "--format", "structured")
    assert code == 0
    res = json.loads(out)["results"]
    assert np.allclose([res["c0"], res["c1"], res["L"], res["V"]], c, atol=1e-10)
    code, _, _ = run(capsys, "fit", "--samples", str(path), "--format", "csv")
    assert code == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n4 5 6\n")
    assert run(capsys, "fit", "--samples", str(bad))[0] == 3


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["analyze", "--mesh", "x"],
    ["analyze", "--order", "3"],
    ["analyze", "--eps-window", "0.1,0.2"],
    ["analyze", "--domain", "unit_ball", "--config", "a.yaml"],
    ["anomaly", "--mesh", "4"],
    ["fit"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert json.loads(err)["error"] == "usage"


def test_config_and_numerical_errors(capsys):
    assert run(capsys, "analyze", "--domain", "nope")[0] == 3
    assert run(capsys, "cgb", "--domain", "bumped_ball(0.05,2)", "--mesh", "4")[0] == 3
    code, _, err = run(capsys, "anomaly", "--mesh", "4", "--upsilon", "log(re(z)-5)")
    assert code == 4 and json.loads(err)["error"] == "numerical"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "crvolume", "analyze", "--mesh", "3", "--format", "structured"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "analyze"
