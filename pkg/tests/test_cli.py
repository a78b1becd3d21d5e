import json
import subprocess
import sys

import pytest

from markedbinomial.cli import dumps17, main

CTI_FLAGS = ["--T", "3", "--marks", "1,-1", "--lambda", "0.5", "--Q", "0.5,0.5"]


def run_cli(args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "markedbinomial.cli", *args],
        capture_output=True, text=True, **kw,
    )


def test_no_arguments_prints_usage():
    proc = run_cli([])
    assert proc.returncode == 2
    assert "usage" in proc.stderr.lower()


def test_unknown_flag_exits_2():
    proc = run_cli(["verify", "--bogus"])
    assert proc.returncode == 2


def test_dumps17_renders_17_significant_digits():
    text = dumps17({"x": 0.1, "n": 3, "flag": True, "none": None})
    assert "0.10000000000000001" in text
    assert json.loads(text) == {"x": 0.1, "n": 3, "flag": True, "none": None}


def test_verify_cti_passes_and_is_deterministic():
    args = ["verify", *CTI_FLAGS, "--seed", "11", "--no-timestamp"]
    first = run_cli(args)
    second = run_cli(args)
    assert first.returncode == 0, first.stderr
    assert first.stdout == second.stdout  # byte identical
    report = json.loads(first.stdout)
    assert report["all_passed"] is True
    assert all(entry["passed"] for entry in report["checks"].values())


def test_verify_exit_codes_and_seed_echo(tmp_path):
    out = tmp_path / "report.json"
    proc = run_cli(["verify", *CTI_FLAGS, "--seed", "3", "--no-timestamp", "--out", str(out)])
    assert proc.returncode == 0
    report = json.loads(out.read_text())
    assert report["seed"] == 3


def test_stein_headrun_values_and_determinism():
    args = ["stein", "headrun", "--n", "10", "--m", "2", "--p", "0.5",
            "--seed", "0", "--no-timestamp"]
    first = run_cli(args)
    second = run_cli(args)
    assert first.returncode == 0, first.stderr
    assert first.stdout == second.stdout
    payload = json.loads(first.stdout)
    assert payload["lambda0"] == pytest.approx(1.375)
    assert payload["bound"] == pytest.approx(0.295164, abs=5e-7)
    assert payload["variance_identity"] == pytest.approx(1.140625)
    assert payload["mean"] == pytest.approx(1.375, abs=1e-12)
    assert payload["exact_tv"] <= payload["bound"]


def test_stein_dna_payload():
    proc = run_cli(["stein", "dna", "--n", "50", "--h", "5", "--alpha", "0.2",
                    "--mu", "0.02", "--no-timestamp"])
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["lambda0"] == pytest.approx(0.736)
    assert payload["dominated"] is True
    assert payload["exact_tv"] <= payload["clump_term"]


def test_hedge_payload():
    proc = run_cli(["hedge", "--a", "-0.1", "--b", "0.2", "--r", "0.025",
                    "--lambda", "0.5", "--p", "0.5", "--T", "3",
                    "--claim", "call:K=1.05", "--x", "1.0", "--no-timestamp"])
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["residual_gap"] <= 1e-8
    assert payload["drift_gap"] == pytest.approx(0.0, abs=1e-15)
    assert len(payload["phi_star"]["3"]) == 9
    assert payload["self_financing_residual"] <= 1e-10


def test_hedge_attainable_claim():
    proc = run_cli(["hedge", "--a", "-0.1", "--b", "0.2", "--r", "0.025",
                    "--lambda", "0.5", "--p", "0.5", "--T", "2",
                    "--claim", "discounted_price", "--x", "1.0", "--no-timestamp"])
    payload = json.loads(proc.stdout)
    assert payload["residual_risk"] <= 1e-10
    for values in payload["phi_star"].values():
        assert all(abs(v - 1.0) <= 1e-8 for v in values)


def test_girsanov_payload():
    proc = run_cli(["girsanov", *CTI_FLAGS, "--lambda-target", "0.5",
                    "--Q-target", "0.75,0.25", "--no-timestamp"])
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["drift"]["1"] == pytest.approx(0.5)
    assert payload["drift"]["-1"] == pytest.approx(-0.5)
    assert payload["varphi"]["1"] == pytest.approx(0.5)
    assert payload["density_mean"] == pytest.approx(1.0, abs=1e-12)
    assert payload["factorization_rel_residual"] <= 1e-13


def test_simulate_deterministic_and_csv():
    args = ["simulate", *CTI_FLAGS, "--paths", "5", "--seed", "4", "--no-timestamp"]
    first = run_cli(args)
    second = run_cli(args)
    assert first.stdout == second.stdout
    payload = json.loads(first.stdout)
    assert len(payload["paths"]) == 5
    csv_proc = run_cli([*args, "--format", "csv"])
    lines = csv_proc.stdout.strip().splitlines()
    assert lines[0] == "path,digits"
    assert len(lines) == 6


def test_decompose_csv():
    proc = run_cli(["decompose", *CTI_FLAGS, "--functional", "count",
                    "--format", "csv", "--no-timestamp"])
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == "order,support,value"
    assert lines[1].startswith("0,,1.5")
    # jump count is first-chaos: all listed orders are 0 or 1
    orders = {line.split(",")[0] for line in lines[1:]}
    assert orders <= {"0", "1"}


def test_config_file_source(tmp_path):
    cfg = tmp_path / "model.cfg"
    cfg.write_text("T = 3\nmarks = 1,-1\nlambda = 0.5\nQ = 0.5,0.5\nseed = 9\n")
    proc = run_cli(["verify", "--config", str(cfg), "--no-timestamp"])
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["seed"] == 9


def test_enumeration_cap_env(tmp_path):
    import os

    env = dict(os.environ)
    env["MBP_ENUM_CAP"] = "10"
    proc = run_cli(["verify", *CTI_FLAGS, "--no-timestamp"], env=env)
    assert proc.returncode == 2
    assert "enumeration too large" in proc.stderr


def test_main_callable_directly(capsys):
    code = main(["verify", *CTI_FLAGS, "--seed", "1", "--no-timestamp"])
    assert code == 0
    out = capsys.readouterr().out
    assert json.loads(out)["all_passed"] is True


def test_verify_reports_worst_offender_on_failure(monkeypatch, capsys):
    from markedbinomial import diagnostics

    monkeypatch.setattr(
        diagnostics, "CHECKS",
        diagnostics.CHECKS + [("always_fails", 1e-12, lambda ctx: 1.0)],
    )
    code = main(["verify", *CTI_FLAGS, "--no-timestamp"])
    captured = capsys.readouterr()
    assert code == 1
    assert "worst offender: always_fails" in captured.err
    report = json.loads(captured.out)
    assert report["all_passed"] is False
    assert report["checks"]["always_fails"]["passed"] is False
