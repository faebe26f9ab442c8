"""Command line behavior: exit codes, report documents, trace files."""

import csv
import json
import os

import pytest

from conftest import INSTANCES
from psslab.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def path_of(name: str) -> str:
    return str(INSTANCES / f"{name}.json")


def doc_of(out: str) -> dict:
    return json.loads(out)


def without_timing(out: str) -> str:
    doc = json.loads(out)
    del doc["timing"]
    return json.dumps(doc, indent=2, sort_keys=True)


def test_analyze_reports_exact_values(capsys):
    code, out, _ = run(capsys, "analyze", "--instance", path_of("example_a"))
    assert code == 0
    doc = doc_of(out)
    an = doc["analysis"]
    assert an["rho_star"] == {"exact": "1", "approx": 1.0}
    assert [m["xi"][0]["exact"] for m in an["modes"]] == ["1/3", "1"]
    assert an["assumptions"]["all_pass"] is True
    assert an["assumptions"]["failing_parts"] == []
    assert an["dual"]["y"][0] == {"exact": "1/7", "approx": pytest.approx(1 / 7)}
    assert an["classification"] == ["potentially_basic"] * 4
    assert an["q"] == 0
    assert len(an["coefficients"]) == 2
    assert an["decomposition"]["status"] == "decomposable"
    assert doc["meta"]["command"] == "analyze"
    assert len(doc["meta"]["instance_sha256"]) == 64
    assert "timing" in doc


def test_analyze_assumption_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--instance", path_of("example_d"))
    assert code == 23
    an = doc_of(out)["analysis"]
    assert an["assumptions"]["failing_parts"] == [3]
    assert an["dual"] is None
    assert len(an["assumptions"]["dual_witnesses"]) == 2
    assert an["coefficients"] is None

    sub = json.loads((INSTANCES / "example_a.json").read_text())
    for c in sub["classes"]:
        c["lambda"] = str(json.loads(json.dumps(c["lambda"])))
    sub["classes"][0]["lambda"] = "1/2"
    sub["classes"][1]["lambda"] = "2/5"
    p = tmp_path / "sub.json"
    p.write_text(json.dumps(sub))
    code, out, _ = run(capsys, "analyze", "--instance", str(p))
    assert code == 21
    assert doc_of(out)["analysis"]["assumptions"]["critical"] is False


def test_unreadable_inputs(capsys, tmp_path):
    code, _, err = run(capsys, "analyze", "--instance", str(tmp_path / "missing.json"))
    assert code == 10 and "i/o error" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "analyze", "--instance", str(bad))
    assert code == 10 and "instance error" in err


def test_solve_hjb_report_and_trace(capsys, tmp_path):
    out_dir = tmp_path / "reports"
    code, out, _ = run(
        capsys,
        "solve-hjb",
        "--instance",
        path_of("example_a2"),
        "--out",
        str(out_dir),
    )
    assert code == 0
    doc = doc_of(out)
    hjb = doc["hjb"]
    assert len(hjb["switch_points"]) == 1
    assert hjb["switch_points"][0] == pytest.approx(0.365, abs=5e-3)
    assert hjb["policy_intervals"][0]["mode"] == 0
    assert hjb["policy_intervals"][-1]["hi"] is None
    assert hjb["residual_max"] <= 1e-7
    assert hjb["dominant_mode"] is None
    assert doc["v0"] == pytest.approx(2.477, abs=2e-3)
    assert doc["q"] == 0

    report = out_dir / "solve-hjb-report.json"
    assert report.read_text().rstrip("\n") == out.rstrip("\n")
    with open(out_dir / "hjb-solution.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "series", "name", "value"]
    assert rows[1][1:3] == ["hjb", "u"]
    assert len(rows) == 1 + 4 * (hjb["grid_n"] + 1)


def test_solve_hjb_refuses_failing_instance(capsys):
    code, _, err = run(capsys, "solve-hjb", "--instance", path_of("example_d"))
    assert code == 23 and "dual not unique" in err


def test_sim_wcp_constant_mode(capsys):
    code, out, _ = run(
        capsys,
        "sim-wcp",
        "--instance",
        path_of("mm1"),
        "--policy",
        "static:0",
        "--step",
        "2e-3",
        "--horizon",
        "4",
        "--reps",
        "200",
    )
    assert code == 0
    doc = doc_of(out)
    assert doc["reference_u0"] == pytest.approx(1.0, abs=1e-12)
    assert doc["policy_intervals"] == [{"lo": 0.0, "hi": None, "mode": 0}]
    est = doc["estimate"]
    assert est["n_paths"] == 200
    assert abs(est["mean"] - 1.0) <= 0.15
    code, _, err = run(
        capsys, "sim-wcp", "--instance", path_of("mm1"), "--policy", "static:7"
    )
    assert code == 10 and "out of range" in err


def test_sim_qcp_report_and_csv(capsys, tmp_path):
    out_dir = tmp_path / "q"
    code, out, _ = run(
        capsys,
        "sim-qcp",
        "--instance",
        path_of("mm1"),
        "--n",
        "25",
        "--policy",
        "static:0",
        "--horizon",
        "2",
        "--reps",
        "4",
        "--out",
        str(out_dir),
    )
    assert code == 0
    doc = doc_of(out)
    assert doc["policy"] == "static:0"
    assert doc["events"] > 0
    assert doc["checks"]["max_relative_violation"] <= 1e-8
    assert doc["identity_residual"] <= 1e-9
    assert doc["estimate"]["n_paths"] == 4
    with open(out_dir / "qcp-scaled.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "series", "name", "value"]
    names = {r[2] for r in rows[1:]}
    assert names == {"w", "f", "l", "l_an", "h", "x_hat[1]", "i_hat[1]"}


def test_sim_qcp_wide_csv(capsys, tmp_path):
    out_dir = tmp_path / "w"
    code, _, _ = run(
        capsys,
        "sim-qcp",
        "--instance",
        path_of("mm1"),
        "--n",
        "16",
        "--policy",
        "priority",
        "--horizon",
        "1",
        "--reps",
        "0",
        "--out",
        str(out_dir),
        "--wide",
    )
    assert code == 0
    with open(out_dir / "qcp-scaled.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "w", "f", "l", "l_an", "h", "x_hat[1]", "i_hat[1]"]
    assert all(len(r) == 8 for r in rows[1:])


def test_sim_qcp_minimum_n(capsys, tmp_path):
    doc = {
        "classes": [{"lambda": 1, "hat_lambda": 0.0, "c2_a": 1.0, "h": 1.0}],
        "servers": 1,
        "activities": [{"i": 1, "k": 1, "mu": 1, "hat_mu": -3.0, "c2_s": 1.0}],
        "gamma": 1.0,
    }
    p = tmp_path / "neg.json"
    p.write_text(json.dumps(doc))
    code, _, err = run(
        capsys, "sim-qcp", "--instance", str(p), "--n", "4", "--policy", "static:0"
    )
    assert code == 10 and "smallest admissible n is 10" in err


def test_verify_bound_deterministic_report(capsys):
    argv = (
        "verify-bound",
        "--instance",
        path_of("mm1"),
        "--n-list",
        "25",
        "--policy",
        "static:0",
        "--reps",
        "6",
        "--horizon",
        "4",
    )
    code1, out1, _ = run(capsys, *argv)
    code2, out2, _ = run(capsys, *argv)
    assert code1 == code2
    assert code1 in (0, 40)
    assert without_timing(out1) == without_timing(out2)
    doc = doc_of(out1)
    assert doc["verdict"] in ("PASS", "FAIL")
    assert doc["runs"][0]["policy"] == "static:0"
    assert doc["meta"]["config"]["n_list"] == [25]

    code, _, err = run(
        capsys, "verify-bound", "--instance", path_of("mm1"), "--n-list", "a,b"
    )
    assert code == 10 and "comma-separated" in err
    code, _, _ = run(capsys, "verify-bound", "--instance", path_of("example_d"))
    assert code == 23


def test_version_and_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    capsys.readouterr()
    with pytest.raises(SystemExit) as exc:
        main(["sim-qcp", "--instance", path_of("mm1")])
    assert exc.value.code == 2
    capsys.readouterr()


def test_reports_written_under_out(capsys, tmp_path):
    out_dir = tmp_path / "r"
    code, out, _ = run(
        capsys, "analyze", "--instance", path_of("example_b"), "--out", str(out_dir)
    )
    assert code == 0
    body = (out_dir / "analyze-report.json").read_text()
    assert body == out
    assert json.loads(body)["analysis"]["rho_star"]["exact"] == "1"
