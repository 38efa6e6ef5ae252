"""Command line interface: subcommands, env overrides, error reporting."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

GOLDEN = str(Path(__file__).resolve().parents[1] / "configs" / "golden.json")


def run_cli(*args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "encirclesim.cli", *args],
        capture_output=True,
        text=True,
        env=full_env,
    )


def test_run_subcommand(tmp_path):
    out = tmp_path / "run"
    proc = run_cli("run", "--config", GOLDEN, "--seed", "3", "--steps", "40", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["seed"] == 3
    assert payload["steps"] == 40
    assert len(payload["log_hash"]) == 64
    assert (out / "steps.jsonl").exists()
    assert (out / "summary.json").exists()
    assert (out / "metrics.csv").exists()
    assert (out / "assignment.jsonl").exists()


def test_run_is_deterministic_across_invocations(tmp_path):
    a = run_cli("run", "--config", GOLDEN, "--seed", "5", "--steps", "30", "--out", str(tmp_path / "a"))
    b = run_cli("run", "--config", GOLDEN, "--seed", "5", "--steps", "30", "--out", str(tmp_path / "b"))
    assert json.loads(a.stdout)["log_hash"] == json.loads(b.stdout)["log_hash"]


def test_env_overrides_seed_and_out(tmp_path):
    out_flag = tmp_path / "flag"
    out_env = tmp_path / "env"
    proc = run_cli(
        "run", "--config", GOLDEN, "--seed", "1", "--steps", "10", "--out", str(out_flag),
        env={"ENCIRCLESIM_SEED": "9", "ENCIRCLESIM_OUT": str(out_env)},
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["seed"] == 9
    assert out_env.exists() and not out_flag.exists()


def test_mc_and_analyze(tmp_path):
    out = tmp_path / "mc"
    proc = run_cli("mc", "--config", GOLDEN, "--seeds", "0..2", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["completed"] == 3
    assert (out / "aggregate.json").exists()
    for s in range(3):
        assert (out / f"seed_{s}" / "steps.jsonl").exists()

    proc = run_cli("analyze", "--log", str(out), "--window", "30", "--min-samples", "500")
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    assert set(report) >= {"gramian", "bounds", "audit", "error_quantiles"}
    assert report["audit"]["clean"]
    assert all(b["ok"] for b in report["bounds"])
    for per_run in report["gramian"].values():
        for tg in per_run.values():
            assert tg["rank"] == 4
            assert tg["observable"]


def test_mc_seed_list_syntax(tmp_path):
    proc = run_cli("mc", "--config", GOLDEN, "--seeds", "1,4", "--out", str(tmp_path / "mc"))
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["seeds"] == [1, 4]


def test_missing_config_yields_machine_readable_error(tmp_path):
    proc = run_cli("run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"))
    assert proc.returncode != 0
    err = json.loads(proc.stderr)
    assert err["error"] == "ConfigurationError"


def test_analyze_missing_dir(tmp_path):
    proc = run_cli("analyze", "--log", str(tmp_path / "empty"))
    assert proc.returncode != 0
    assert json.loads(proc.stderr)["error"] == "not-found"


@pytest.mark.parametrize("spec,expected", [("0..3", [0, 1, 2, 3]), ("2,5,7", [2, 5, 7])])
def test_seed_spec_parsing(spec, expected):
    from encirclesim.cli import _parse_seeds

    assert _parse_seeds(spec) == expected
