"""End-to-end command-line tests, run through subprocesses: output schemas,
exit codes, config merging, and replay determinism.
"""

import json
import math
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "torusnuh.cli"]


def run_cli(*args):
    return subprocess.run(CLI + list(args), capture_output=True)


def run_json(*args):
    proc = run_cli(*args)
    assert proc.returncode == 0, proc.stderr.decode()
    return json.loads(proc.stdout.decode())


def stderr_error(proc):
    return json.loads(proc.stderr.decode())["error"]


def test_no_command_exits_precondition():
    assert run_cli().returncode == 2


def test_snf_family_matrix():
    d = run_json("snf", "--matrix", "5,5,0,5")
    assert d["tau1"] == 5 and d["tau2"] == 5
    assert d["det"] == 25 and d["degree"] == 25
    assert d["homothety"] is False
    assert d["D"] == [[5, 0], [0, 5]]
    assert d["normal_position"] is not None
    assert len(d["coset_representatives"]) == 25


def test_snf_homothety_flag():
    d = run_json("snf", "--matrix", "3,0,0,3")
    assert d["homothety"] is True
    assert d["normal_position"] is None
    assert d["tau1"] == 3 and d["tau2"] == 3


def test_snf_singular_input():
    proc = run_cli("snf", "--matrix", "1,0,0,0")
    assert proc.returncode == 2
    err = stderr_error(proc)
    assert err["type"] == "SingularMatrixError"
    assert "singular" in err["message"]


def test_snf_rejects_malformed_matrix():
    assert run_cli("snf", "--matrix", "1,2,3").returncode == 2
    assert run_cli("snf").returncode == 2


def test_threshold_satisfied_at():
    d = run_json("threshold", "--k", "2", "--condition", "nuh", "--check", "1042")
    rep = d["report"]
    assert 1042.0 in rep["satisfied_at"]
    assert rep["minimal_t"] < 1042.0
    assert rep["margin"] > 0.0
    assert rep["slope"] == pytest.approx(1.0 / 3.0)
    d = run_json("threshold", "--k", "2", "--condition", "u1", "--check", "10.02")
    assert 10.02 in d["report"]["satisfied_at"]


def test_threshold_csv_matches_json():
    d = run_json("threshold", "--k", "3", "--condition", "nuh")
    proc = run_cli("threshold", "--k", "3", "--condition", "nuh", "--format", "csv")
    assert proc.returncode == 0
    rows = dict(
        line.split(",", 1)
        for line in proc.stdout.decode().splitlines() if line
    )
    assert float(rows["report.minimal_t"]) == d["report"]["minimal_t"]
    assert rows["inputs.tau2"] == "7"


def test_preimages_caption_counts():
    d = run_json("preimages", "--x", "0.594,0.287", "--k", "2", "--t", "1.5",
                 "--depth", "2")
    assert d["counts"] == {"cone_invariant": 20, "total": 25}
    parents = [blk["parent_branch"] for blk in d["depth2"]]
    assert len(parents) == 5
    blk = d["depth2"][0]
    plus = sum(1 for c in blk["children"] if c["plus_half_in"])
    minus = sum(1 for c in blk["children"] if c["minus_half_in"])
    assert len(blk["children"]) == 25
    assert (plus, minus) == (10, 10)


def test_preimages_linear_lattice():
    d = run_json("preimages", "--x", "0,0", "--k", "2", "--t", "0", "--depth", "1")
    pts = [tuple(p["point"]) for p in d["preimages"]]
    assert len(pts) == 25

    def tdist(p, q):
        return max(min(abs(a - b), 1.0 - abs(a - b)) for a, b in zip(p, q))

    for i in range(5):
        for j in range(5):
            want = (i / 5.0, j / 5.0)
            assert min(tdist(p, want) for p in pts) < 1e-12


def test_lyap_replay_is_byte_identical():
    args = ("lyap", "--k", "2", "--t", "1.5", "--n", "120", "--samples", "16",
            "--seed", "7")
    first = run_cli(*args)
    second = run_cli(*args)
    assert first.returncode == 0 and second.returncode == 0
    assert first.stdout == second.stdout
    d = json.loads(first.stdout.decode())
    assert d["chi_plus"]["seed"] == 7
    assert {"value", "std_error", "ci95"} <= set(d["chi_minus"])
    assert {"sum", "gap", "log_degree", "within_3se"} <= set(d["pairing"])


def test_lyap_budget_exit():
    proc = run_cli("lyap", "--k", "2", "--t", "0", "--n", "1000",
                   "--samples", "10000000", "--seed", "1")
    assert proc.returncode == 3
    err = stderr_error(proc)
    assert err["type"] == "BudgetError"
    assert "budget" in err["message"]


def test_config_file_merging(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"t": 0.0, "n": 110, "samples": 8}))
    base = ("lyap", "--k", "2", "--seed", "2", "--config", str(cfg))
    # config supplies t
    d = run_json(*base)
    assert d["map"]["t"] == 0.0
    # an explicit flag beats the config value
    d = run_json(*base, "--t", "1.5")
    assert d["map"]["t"] == 1.5
    assert d["chi_plus"]["n"] == 110 and d["chi_plus"]["samples"] == 8


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"strength": 3.0}))
    proc = run_cli("lyap", "--k", "2", "--t", "0", "--config", str(cfg))
    assert proc.returncode == 2
    assert "unknown config keys" in stderr_error(proc)["message"]


def test_out_file_matches_stdout(tmp_path):
    direct = run_cli("snf", "--matrix", "5,5,0,5")
    out = tmp_path / "snf.json"
    filed = run_cli("snf", "--matrix", "5,5,0,5", "--out", str(out))
    assert filed.returncode == 0
    assert filed.stdout == b""
    assert out.read_bytes() == direct.stdout


def test_cchi_output_shape():
    d = run_json("cchi", "--k", "2", "--t", "50", "--depth", "1",
                 "--grid", "2x2x2")
    assert isinstance(d["value"], float)
    assert isinstance(d["positive_minimum"], bool)
    assert d["c_det"] == pytest.approx(math.log(25.0))
    assert d["grid"] == [2, 2, 2]
    assert d["map"]["t"] == 50.0


def test_segments_quick_run():
    d = run_json("segments", "--k", "2", "--t", "43", "--order", "EH",
                 "--n-segments", "2", "--n-curves", "1", "--seed", "4")
    assert d["reference_length"] == pytest.approx(2.0)
    (res,) = d["results"]
    assert res["above_threshold"] is True
    assert res["segments_with_v_subsegment"] == 2
    assert res["all_contained"] is True
    assert res["all_curves_reached"] is True
    assert len(res["steps_used"]) == 1
    assert 1 <= res["steps_used"][0] <= res["max_steps"]


def test_solenoid_check_quick_run():
    d = run_json("solenoid-check", "--k", "2", "--t", "1.5", "--trials", "40",
                 "--word-depth", "5", "--cylinder-depth", "2",
                 "--chi2-draws", "4000", "--seed", "11")
    assert d["ok"] is True
    names = [c["name"] for c in d["checks"]]
    assert names == [
        "psi_identity", "psi_group_law", "plane_difference_identity",
        "cylinder_normalization", "cylinder_refinement",
        "cylinder_sampling_chi2", "backward_orbit_consistency",
    ]
    assert all(c["passed"] for c in d["checks"])


def test_continuity_scan_quick_run():
    d = run_json("continuity-scan", "--k", "2", "--t-values", "10.02,11,12",
                 "--n", "150", "--samples", "60", "--seed", "3")
    assert isinstance(d["all_ok"], bool)
    assert len(d["points"]) == 3
    assert len(d["increments"]) == 2
    assert {"intercept", "lambda_log_t", "residual_std"} <= set(d["fit"])
    for inc in d["increments"]:
        assert {"from_t", "to_t", "delta", "allowed", "ok"} <= set(inc)
    # the output flags itself as an empirical smoke test, not a proof
    assert "not a proof" in d["note"] or "empirical" in d["note"]


def test_continuity_scan_needs_three_points():
    proc = run_cli("continuity-scan", "--k", "2", "--t-values", "10,11",
                   "--n", "120", "--samples", "40", "--seed", "3")
    assert proc.returncode == 2
