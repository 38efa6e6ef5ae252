"""File output for runs: JSONL step logs, summary JSON, CSV projection."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .harness import MonteCarloResult, RunResult

STEP_LOG = "steps.jsonl"
SUMMARY = "summary.json"
ASSIGNMENT_TRACE = "assignment.jsonl"
METRICS_CSV = "metrics.csv"
AGGREGATE = "aggregate.json"


def write_run(out_dir: str | Path, result: "RunResult") -> Path:
    """Write steps.jsonl, summary.json, assignment.jsonl, and metrics.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / STEP_LOG, "w") as fh:
        for line in result.jsonl_lines():
            fh.write(line)
            fh.write("\n")
    summary = result.summary.to_json_dict()
    summary["config"] = result.config.to_dict()
    summary["log_hash"] = result.log_hash()
    (out / SUMMARY).write_text(json.dumps(summary, indent=2) + "\n")
    with open(out / ASSIGNMENT_TRACE, "w") as fh:
        for rec in result.assignment_trace:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")
    _write_csv(out / METRICS_CSV, result)
    return out


def _write_csv(path: Path, result: "RunResult") -> None:
    m = result.config.n_targets
    header = (
        ["k"]
        + [f"e_norm_{j}" for j in range(m)]
        + [f"ebar_norm_{j}" for j in range(m)]
        + ["min_drone_dist", "min_obstacle_dist"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in result.records:
            row = (
                [rec.k]
                + [repr(float(v)) for v in rec.metrics.e_norm]
                + [repr(float(v)) for v in rec.metrics.ebar_norm]
                + [repr(rec.metrics.min_drone_dist), repr(rec.metrics.min_obstacle_dist)]
            )
            writer.writerow(row)


def write_monte_carlo(out_dir: str | Path, mc: "MonteCarloResult") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / AGGREGATE).write_text(json.dumps(mc.to_json_dict(), indent=2) + "\n")
    return out


def read_step_log(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def find_run_dirs(log_dir: str | Path) -> list[Path]:
    """Run directories under log_dir: itself, or its seed_* children."""
    root = Path(log_dir)
    if (root / STEP_LOG).exists():
        return [root]
    subs = sorted(
        (p for p in root.glob("seed_*") if (p / STEP_LOG).exists()),
        key=lambda p: int(p.name.split("_", 1)[1]),
    )
    return subs
