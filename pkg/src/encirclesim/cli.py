"""Command line interface: run, mc, and analyze subcommands.

Exit code 0 on success; on failure a machine-readable JSON error object
is printed to stderr and the exit code is nonzero.  The environment
variables ENCIRCLESIM_SEED and ENCIRCLESIM_OUT override the seed and
output directory arguments.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness_io
from .analysis import collision_audit, observability_gramian, encirclement_bounds
from .errors import SimulationError
from .harness import run_monte_carlo, run_scenario
from .model import SystemMatrices
from .scenario import load_config


def _parse_seeds(spec: str) -> list[int]:
    """Seed list syntax: '0..19' (inclusive range) or '0,3,7'."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seed = int(os.environ.get("ENCIRCLESIM_SEED", args.seed if args.seed is not None else cfg.seed))
    cfg = cfg.with_seed(seed)
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    result = run_scenario(cfg)
    out = Path(os.environ.get("ENCIRCLESIM_OUT", args.out))
    harness_io.write_run(out, result)
    print(
        json.dumps(
            {
                "out": str(out),
                "seed": seed,
                "steps": cfg.steps,
                "log_hash": result.log_hash(),
                "pairs": {str(j): list(p) for j, p in sorted(result.summary.pairs.items())},
            }
        )
    )
    return 0


def _cmd_mc(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        return _fail("usage", "no seeds given")
    out = Path(os.environ.get("ENCIRCLESIM_OUT", args.out))
    mc = run_monte_carlo(cfg, seeds, out_dir=out)
    print(
        json.dumps(
            {
                "out": str(out),
                "seeds": seeds,
                "completed": len(mc.summaries),
                "failed": {str(s): m for s, m in mc.failures.items()},
            }
        )
    )
    return 0 if not mc.failures else 2


def _cmd_analyze(args: argparse.Namespace) -> int:
    run_dirs = harness_io.find_run_dirs(args.log)
    if not run_dirs:
        return _fail("not-found", f"no step logs under {args.log}")
    first_summary = json.loads((run_dirs[0] / harness_io.SUMMARY).read_text())
    cfg_dict = first_summary["config"]
    mats = SystemMatrices(t=cfg_dict["t"])
    ctrl = cfg_dict["controller"]
    q_hi = max(
        float(np.linalg.eigvalsh(np.asarray(tg.get("q_process", 0.05)).reshape(2, 2)).max())
        if not np.isscalar(tg.get("q_process", 0.05))
        else float(tg.get("q_process", 0.05))
        for tg in cfg_dict["targets"]
    )
    cut = int(cfg_dict.get("transient_cutoff", 50))
    n_targets = len(cfg_dict["targets"])

    e_sq: dict[int, list] = {j: [] for j in range(n_targets)}
    ebar_sq: dict[int, list] = {j: [] for j in range(n_targets)}
    e_norm_all: dict[int, list] = {j: [] for j in range(n_targets)}
    dd_all, do_all = [], []
    gramians = {}
    for run_dir in run_dirs:
        steps = harness_io.read_step_log(run_dir / harness_io.STEP_LOG)
        for j in range(n_targets):
            e = np.array([s["metrics"]["e_norm"][j] for s in steps])
            ebar = np.array([s["metrics"]["ebar_norm"][j] for s in steps])
            e_sq[j].append(e[cut:] ** 2)
            ebar_sq[j].append(ebar[cut:] ** 2)
            e_norm_all[j].append(e[cut:])
        dd_all.append(np.array([s["metrics"]["min_drone_dist"] for s in steps]))
        do_all.append(
            np.array(
                [
                    s["metrics"]["min_obstacle_dist"]
                    if s["metrics"]["min_obstacle_dist"] is not None
                    else np.inf
                    for s in steps
                ]
            )
        )
        gramians[run_dir.name] = _tail_gramians(steps, n_targets, args.window, mats)

    report: dict = {"runs": [str(d) for d in run_dirs], "gramian": gramians}
    try:
        checks = encirclement_bounds(
            {j: np.concatenate(v) for j, v in e_sq.items()},
            {j: np.concatenate(v) for j, v in ebar_sq.items()},
            mats,
            q_hi=q_hi,
            min_samples=args.min_samples,
        )
        report["bounds"] = [
            {
                "target": c.target_id,
                "ms_estimation": c.ms_estimation,
                "ms_encirclement": c.ms_encirclement,
                "bound": c.bound,
                "samples": c.samples,
                "ok": c.ok,
            }
            for c in checks
        ]
    except SimulationError as exc:
        report["bounds"] = {"error": str(exc)}

    audit = collision_audit(
        np.concatenate(dd_all),
        np.concatenate(do_all),
        drone_radius=ctrl["drone_radius"],
        r_safe=ctrl["drone_radius"] + ctrl["safety_margin"],
    )
    report["audit"] = {
        "min_drone_dist": audit.min_drone_distance,
        "min_obstacle_dist": None
        if np.isinf(audit.min_obstacle_distance)
        else audit.min_obstacle_distance,
        "drone_threshold": audit.drone_threshold,
        "obstacle_threshold": audit.obstacle_threshold,
        "clean": audit.clean,
        "drone_violations": len(audit.drone_violations),
        "obstacle_violations": len(audit.obstacle_violations),
    }
    report["error_quantiles"] = {
        str(j): {
            str(p): float(np.quantile(np.concatenate(v), p)) for p in (0.5, 0.9, 0.99)
        }
        for j, v in e_norm_all.items()
        if v and np.concatenate(v).size
    }
    print(json.dumps(report, indent=2))
    bounds_ok = isinstance(report["bounds"], list) and all(b["ok"] for b in report["bounds"])
    return 0 if (audit.clean and bounds_ok) else 3


def _tail_gramians(steps: list[dict], n_targets: int, window: int, mats: SystemMatrices) -> dict:
    """Observability over the trailing window of each target's pair history."""
    out = {}
    for j in range(n_targets):
        ps, vs = [], []
        for s in reversed(steps):
            rec = next((e for e in s["estimators"] if e["target"] == j), None)
            if rec is None or rec.get("p_pair") is None:
                continue
            ps.append(np.asarray(rec["p_pair"]))
            vs.append(rec["upsilon_hat"])
            if len(ps) >= window + 1:
                break
        if len(ps) < 4:
            out[str(j)] = {"error": f"only {len(ps)} usable instants"}
            continue
        rep = observability_gramian(ps, vs, mats)
        out[str(j)] = {
            "window": rep.window,
            "rank": rep.rank,
            "eig_min": rep.eig_min,
            "eig_max": rep.eig_max,
            "observable": rep.observable,
        }
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="encirclesim",
        description="Multi-drone range-only target encirclement simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write its logs")
    p_run.add_argument("--config", required=True, help="scenario file (.json or .toml)")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--steps", type=int, default=None, help="override the step count")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_mc = sub.add_parser("mc", help="run a seed batch of the same scenario")
    p_mc.add_argument("--config", required=True)
    p_mc.add_argument("--seeds", required=True, help="'0..19' or comma list '0,1,2'")
    p_mc.add_argument("--out", required=True)
    p_mc.set_defaults(func=_cmd_mc)

    p_an = sub.add_parser("analyze", help="post-hoc analysis of a run or batch directory")
    p_an.add_argument("--log", required=True, help="run directory or mc output directory")
    p_an.add_argument("--window", type=int, default=30, help="observability window length m1")
    p_an.add_argument(
        "--min-samples",
        type=int,
        default=1000,
        help="post-transient samples required per target for the bound check",
    )
    p_an.set_defaults(func=_cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
