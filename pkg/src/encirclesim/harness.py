"""Deterministic per-step pipeline, run logging, and Monte-Carlo batching.

Each step runs, in order: range sensing, task assignment (initial step
only, then frozen), estimator updates, force computation and capping,
acceleration commands, and finally the world step with fresh process
noise.  A run is a pure function of (config, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import assignment as assignment_mod
from .controller import (
    ForceBreakdown,
    accel_command,
    action_radius,
    apply_caps,
    attractive_force,
    interaction_force,
    repulsive_force,
)
from .errors import SimulationError, TargetOutOfRange
from .estimator import (
    EstimatorState,
    MeasurementRecord,
    build_measurement,
    filter_predict,
    filter_update,
    init_estimator,
)
from .model import (
    DroneState,
    Obstacle,
    SystemMatrices,
    TargetState,
    preset_shape,
    step_drone,
    step_target,
)
from .scenario import ScenarioConfig
from .sensing import NoiseStreams, RangeBatch, measure_batch, neighbor_set, visible_targets
from .harness_io import write_monte_carlo, write_run  # noqa: F401  (re-export)

PIPELINE_ORDER = [
    "sensing",
    "assignment",
    "estimation",
    "forces",
    "commands",
    "world_step",
]


@dataclass
class MetricsFrame:
    """Ground-truth diagnostics for one step."""

    k: int
    e_norm: np.ndarray  # (M,) estimation error norms
    ebar_norm: np.ndarray  # (M,) pair-sum encirclement error norms
    min_drone_dist: float
    min_obstacle_dist: float
    force_free: np.ndarray  # (M,) bool, capped interaction+repulsion zero for the pair
    zeta_eig_min: np.ndarray  # (M,)
    zeta_eig_max: np.ndarray  # (M,)


@dataclass
class StepRecord:
    """Everything logged for one step, before serialization."""

    k: int
    drones: list[DroneState]
    targets: list[TargetState]
    estimates: dict[int, EstimatorState]
    measurements: dict[int, MeasurementRecord]
    batch_means: dict[int, tuple[float, float]]  # target -> pair mean ranges
    forces: dict[int, ForceBreakdown]
    commands: dict[int, np.ndarray]
    metrics: MetricsFrame

    def to_json_dict(self, pairs: dict[int, tuple[int, int]]) -> dict:
        est = []
        for j in sorted(self.estimates):
            e = self.estimates[j]
            m = self.measurements.get(j)
            est.append(
                {
                    "target": j,
                    "eta_hat": e.eta_hat.tolist(),
                    "zeta_trace": float(np.trace(e.zeta)),
                    "zeta_eig_min": float(self.metrics.zeta_eig_min[j]),
                    "zeta_eig_max": float(self.metrics.zeta_eig_max[j]),
                    "theta": m.theta if m else None,
                    "upsilon_hat": m.var_hat if m else None,
                    "p_pair": m.p_pair.tolist() if m else None,
                    "clamped": bool(m.clamped) if m else False,
                    "degenerate": bool(m.degenerate) if m else False,
                }
            )
        return {
            "k": self.k,
            "drones": [
                {"id": d.id, "x": d.position.tolist(), "v": d.velocity.tolist()}
                for d in self.drones
            ],
            "targets": [
                {"id": tg.id, "s": tg.position.tolist(), "nu": tg.velocity.tolist()}
                for tg in self.targets
            ],
            "assignment": {str(j): list(p) for j, p in sorted(pairs.items())},
            "estimators": est,
            "forces": [
                {
                    "drone": i,
                    "at": fb.at.tolist(),
                    "inter": fb.inter.tolist(),
                    "rep": fb.rep.tolist(),
                    "inter_capped": fb.inter_capped.tolist(),
                    "rep_capped": fb.rep_capped.tolist(),
                    "inter_cap_applied": fb.inter_cap_applied,
                    "rep_cap_applied": fb.rep_cap_applied,
                    "resultant": fb.resultant.tolist(),
                    "u": self.commands[i].tolist(),
                }
                for i, fb in sorted(self.forces.items())
            ],
            "measurements": [
                {"target": j, "mean_ranges": list(means)}
                for j, means in sorted(self.batch_means.items())
            ],
            "metrics": {
                "e_norm": self.metrics.e_norm.tolist(),
                "ebar_norm": self.metrics.ebar_norm.tolist(),
                "min_drone_dist": self.metrics.min_drone_dist,
                "min_obstacle_dist": self.metrics.min_obstacle_dist,
                "force_free": self.metrics.force_free.astype(bool).tolist(),
            },
        }


@dataclass
class RunSummary:
    """Aggregates for one completed run."""

    seed: int
    steps: int
    n_drones: int
    n_targets: int
    pairs: dict[int, tuple[int, int]]
    assignment_rounds: int
    transient_cutoff: int
    ms_e: dict[int, float]
    ms_ebar: dict[int, float]
    e_band_occupancy: dict[int, float]  # fraction of post-transient steps with |e| <= 0.4
    min_drone_dist: float
    min_obstacle_dist: float
    clamp_events: int
    degenerate_events: int
    max_z_drift: float
    max_force_free_streak: dict[int, int]
    rep_force_instants: int = 0  # (drone, step) pairs with nonzero repulsion
    inter_force_instants: int = 0
    pipeline: tuple[str, ...] = tuple(PIPELINE_ORDER)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "steps": self.steps,
            "n_drones": self.n_drones,
            "n_targets": self.n_targets,
            "pairs": {str(j): list(p) for j, p in sorted(self.pairs.items())},
            "assignment_rounds": self.assignment_rounds,
            "transient_cutoff": self.transient_cutoff,
            "ms_e": {str(j): v for j, v in sorted(self.ms_e.items())},
            "ms_ebar": {str(j): v for j, v in sorted(self.ms_ebar.items())},
            "e_band_occupancy": {str(j): v for j, v in sorted(self.e_band_occupancy.items())},
            "min_drone_dist": self.min_drone_dist,
            "min_obstacle_dist": self.min_obstacle_dist,
            "clamp_events": self.clamp_events,
            "degenerate_events": self.degenerate_events,
            "max_z_drift": self.max_z_drift,
            "max_force_free_streak": {
                str(j): v for j, v in sorted(self.max_force_free_streak.items())
            },
            "rep_force_instants": self.rep_force_instants,
            "inter_force_instants": self.inter_force_instants,
            "pipeline": list(self.pipeline),
        }


@dataclass
class RunResult:
    """Step records plus summary for one deterministic run."""

    config: ScenarioConfig
    records: list[StepRecord]
    summary: RunSummary
    assignment_trace: list[dict] = field(default_factory=list)

    def metric_series(self, name: str) -> np.ndarray:
        if name == "min_drone_dist":
            return np.array([r.metrics.min_drone_dist for r in self.records])
        if name == "min_obstacle_dist":
            return np.array([r.metrics.min_obstacle_dist for r in self.records])
        raise KeyError(name)

    def e_norms(self, target: int) -> np.ndarray:
        return np.array([r.metrics.e_norm[target] for r in self.records])

    def ebar_norms(self, target: int) -> np.ndarray:
        return np.array([r.metrics.ebar_norm[target] for r in self.records])

    def pair_history(self, target: int) -> tuple[list[np.ndarray], list[float]]:
        """Relative drone positions and output variances, most recent first."""
        ps, vs = [], []
        for rec in reversed(self.records):
            m = rec.measurements.get(target)
            if m is None:
                continue
            ps.append(m.p_pair)
            vs.append(m.var_hat)
        return ps, vs

    def jsonl_lines(self) -> list[str]:
        pairs = self.summary.pairs
        return [
            json.dumps(r.to_json_dict(pairs), separators=(",", ":")) for r in self.records
        ]

    def log_hash(self) -> str:
        h = hashlib.sha256()
        for line in self.jsonl_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


def _pairwise_min_dist(positions: np.ndarray) -> float:
    if len(positions) < 2:
        return float("inf")
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    iu = np.triu_indices(len(positions), k=1)
    return float(dist[iu].min())


def _min_obstacle_dist(positions: np.ndarray, obstacles: list[Obstacle]) -> float:
    if not obstacles:
        return float("inf")
    obs = np.stack([o.position for o in obstacles])
    diff = positions[:, None, :] - obs[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).min())


class _World:
    """Mutable simulation state threaded through the pipeline."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.mats = SystemMatrices(t=cfg.t)
        self.streams = NoiseStreams(cfg.seed)
        self.drones = [
            DroneState(position=d.position, velocity=d.velocity, id=i)
            for i, d in enumerate(cfg.drones)
        ]
        self.targets = [
            TargetState(position=tg.position, velocity=tg.velocity, id=j)
            for j, tg in enumerate(cfg.targets)
        ]
        self.obstacles = [Obstacle(position=o, id=n) for n, o in enumerate(cfg.obstacles)]
        self.estimators: dict[int, EstimatorState] = {}
        self.pairs: dict[int, tuple[int, int]] = {}

    def omega(self, target_id: int, step: int) -> np.ndarray:
        # The noise-off flag freezes target driving entirely, scripted or not.
        if not self.cfg.flags.noise:
            return np.zeros(2)
        tg_cfg = self.cfg.targets[target_id]
        if tg_cfg.omega_script is not None:
            if step < len(tg_cfg.omega_script):
                return tg_cfg.omega_script[step]
            return np.zeros(2)
        rng = self.streams.process_rng(target_id, step)
        return rng.multivariate_normal(np.zeros(2), tg_cfg.q_process, method="cholesky")

    def measure(self, drone: DroneState, target: TargetState, step: int) -> RangeBatch:
        rng = self.streams.measurement_rng(drone.id, target.id, step)
        return measure_batch(
            drone, target, self.cfg.sensor, rng, step=step, noise=self.cfg.flags.noise
        )

    def estimate_of(self, target_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(position, velocity) the controllers act on for one target."""
        if self.cfg.flags.perfect_estimate:
            tg = self.targets[target_id]
            return tg.position.copy(), tg.velocity.copy()
        est = self.estimators[target_id]
        return est.position.copy(), est.velocity.copy()


def _initial_assignment(world: _World) -> tuple[assignment_mod.AssignmentResult, dict]:
    cfg = world.cfg
    distances: dict[tuple[int, int], float] = {}
    batches: dict[tuple[int, int], RangeBatch] = {}
    for drone in world.drones:
        for j in sorted(visible_targets(drone, world.targets, cfg.sensor)):
            batch = world.measure(drone, world.targets[j], step=0)
            batches[(drone.id, j)] = batch
            distances[(drone.id, j)] = batch.mean_range
    neighbors = {
        d.id: neighbor_set(d, world.drones, cfg.sensor) for d in world.drones
    }
    result = assignment_mod.run_assignment(
        distances,
        n_drones=cfg.n_drones,
        n_targets=cfg.n_targets,
        neighbors=neighbors,
        eps_tilde=cfg.eps_tilde,
        max_rounds=cfg.assignment_max_rounds,
    )
    return result, batches


def _step_forces(
    world: _World,
    k: int,
    estimates: dict[int, tuple[np.ndarray, np.ndarray]],
) -> tuple[dict[int, ForceBreakdown], dict[int, np.ndarray]]:
    cfg = world.cfg
    params = cfg.controller
    shape_now = {
        j: preset_shape(k + cfg.shape_phase(j), cfg.shape) for j in world.pairs
    }
    forces: dict[int, ForceBreakdown] = {}
    commands: dict[int, np.ndarray] = {}
    drone_of_pair = {}
    for j, (i, g) in world.pairs.items():
        drone_of_pair[i] = (j, "i")
        drone_of_pair[g] = (j, "g")
    for drone in world.drones:
        j, side = drone_of_pair[drone.id]
        s_hat, nu_hat = estimates[j]
        at = attractive_force(side, drone.position, s_hat, nu_hat, shape_now[j], world.mats)
        if cfg.flags.attractive_only:
            fb = ForceBreakdown(at=at, inter=np.zeros(3), rep=np.zeros(3))
            fb.inter_capped = np.zeros(3)
            fb.rep_capped = np.zeros(3)
        else:
            r_bar = action_radius(nu_hat, params, world.mats)
            neigh_ids = neighbor_set(drone, world.drones, cfg.sensor)
            neigh_pos = [world.drones[g].position for g in sorted(neigh_ids)]
            inter = interaction_force(drone.position, neigh_pos, params, r_bar)
            # Obstacles the drone detects, plus targets co-observed by the
            # pair other than the one it encircles.
            obst_pos = [
                o.position
                for o in world.obstacles
                if np.linalg.norm(drone.position - o.position) <= cfg.sensor.r2
            ]
            partner = world.drones[world.pairs[j][1] if side == "i" else world.pairs[j][0]]
            co_observed = visible_targets(drone, world.targets, cfg.sensor) & visible_targets(
                partner, world.targets, cfg.sensor
            )
            other_targets = [estimates[m][0] for m in sorted(co_observed) if m != j]
            rep = repulsive_force(drone.position, obst_pos, other_targets, params, r_bar)
            fb = apply_caps(ForceBreakdown(at=at, inter=inter, rep=rep), params)
        forces[drone.id] = fb
        commands[drone.id] = accel_command(fb, drone.velocity, params, world.mats)
    return forces, commands


def _metrics(
    world: _World,
    k: int,
    forces: dict[int, ForceBreakdown],
) -> MetricsFrame:
    cfg = world.cfg
    m = cfg.n_targets
    e_norm = np.zeros(m)
    ebar_norm = np.zeros(m)
    force_free = np.zeros(m, dtype=bool)
    zeta_lo = np.zeros(m)
    zeta_hi = np.zeros(m)
    for j in range(m):
        tg = world.targets[j]
        if cfg.flags.perfect_estimate:
            e_norm[j] = 0.0
            zeta_lo[j] = zeta_hi[j] = 0.0
        else:
            est = world.estimators[j]
            e_norm[j] = float(np.linalg.norm(tg.state_vector - est.eta_hat))
            eigs = np.linalg.eigvalsh(est.zeta)
            zeta_lo[j], zeta_hi[j] = float(eigs[0]), float(eigs[-1])
        i, g = world.pairs[j]
        p_i = world.drones[i].ground_position - tg.position
        p_g = world.drones[g].ground_position - tg.position
        ebar_norm[j] = float(np.linalg.norm(p_i + p_g))
        extra_i = forces[i].inter_capped + forces[i].rep_capped
        extra_g = forces[g].inter_capped + forces[g].rep_capped
        force_free[j] = not (extra_i.any() or extra_g.any())
    positions = np.stack([d.position for d in world.drones])
    return MetricsFrame(
        k=k,
        e_norm=e_norm,
        ebar_norm=ebar_norm,
        min_drone_dist=_pairwise_min_dist(positions),
        min_obstacle_dist=_min_obstacle_dist(positions, world.obstacles),
        force_free=force_free,
        zeta_eig_min=zeta_lo,
        zeta_eig_max=zeta_hi,
    )


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Run the full pipeline for cfg.steps steps.

    Raises SimulationError subclasses on assignment or numerical failure,
    annotated with the step index where the pipeline aborted.
    """
    world = _World(cfg)
    records: list[StepRecord] = []

    assign_result, init_batches = _initial_assignment(world)
    world.pairs = assign_result.pairs

    if not cfg.flags.perfect_estimate:
        for j, (i, g) in world.pairs.items():
            world.estimators[j] = init_estimator(
                init_batches[(i, j)],
                init_batches[(g, j)],
                world.drones[i].position,
                world.drones[g].position,
                cfg.zeta0,
                target_id=j,
            )

    clamp_events = 0
    degenerate_events = 0
    z0 = np.array([d.position[2] for d in world.drones])
    max_z_drift = 0.0

    for k in range(cfg.steps):
        try:
            measurements: dict[int, MeasurementRecord] = {}
            batch_means: dict[int, tuple[float, float]] = {}
            if k > 0 and not cfg.flags.perfect_estimate:
                for j, (i, g) in world.pairs.items():
                    try:
                        batch_i = world.measure(world.drones[i], world.targets[j], step=k)
                        batch_g = world.measure(world.drones[g], world.targets[j], step=k)
                    except TargetOutOfRange:
                        # No batch this step; the filter coasts on prediction.
                        world.estimators[j] = filter_predict(
                            world.estimators[j], cfg.targets[j].q_process, world.mats
                        )
                        continue
                    meas = build_measurement(
                        batch_i,
                        batch_g,
                        world.drones[i].position,
                        world.drones[g].position,
                    )
                    measurements[j] = meas
                    batch_means[j] = (batch_i.mean_range, batch_g.mean_range)
                    world.estimators[j] = filter_update(
                        world.estimators[j], meas, cfg.targets[j].q_process, world.mats
                    )
                    clamp_events += int(meas.clamped)
                    degenerate_events += int(meas.degenerate)
            elif k == 0 and not cfg.flags.perfect_estimate:
                for j, (i, g) in world.pairs.items():
                    batch_means[j] = (
                        init_batches[(i, j)].mean_range,
                        init_batches[(g, j)].mean_range,
                    )

            estimates = {j: world.estimate_of(j) for j in world.pairs}
            forces, commands = _step_forces(world, k, estimates)
            metrics = _metrics(world, k, forces)
            records.append(
                StepRecord(
                    k=k,
                    drones=list(world.drones),
                    targets=list(world.targets),
                    estimates=dict(world.estimators),
                    measurements=measurements,
                    batch_means=batch_means,
                    forces=forces,
                    commands=commands,
                    metrics=metrics,
                )
            )

            world.drones = [
                step_drone(d, commands[d.id], world.mats) for d in world.drones
            ]
            world.targets = [
                step_target(tg, world.omega(tg.id, k), world.mats) for tg in world.targets
            ]
            z_now = np.array([d.position[2] for d in world.drones])
            max_z_drift = max(max_z_drift, float(np.abs(z_now - z0).max()))
        except SimulationError as exc:
            raise type(exc)(f"step {k}: {exc}") from exc

    summary = _summarize(
        cfg, world.pairs, assign_result.rounds, records, clamp_events, degenerate_events, max_z_drift
    )
    return RunResult(
        config=cfg,
        records=records,
        summary=summary,
        assignment_trace=assign_result.trace,
    )


def _summarize(
    cfg: ScenarioConfig,
    pairs: dict[int, tuple[int, int]],
    rounds: int,
    records: list[StepRecord],
    clamp_events: int,
    degenerate_events: int,
    max_z_drift: float,
) -> RunSummary:
    cut = cfg.transient_cutoff
    post = [r for r in records if r.k >= cut] or records
    rep_instants = sum(
        1 for r in records for fb in r.forces.values() if fb.rep.any()
    )
    inter_instants = sum(
        1 for r in records for fb in r.forces.values() if fb.inter.any()
    )
    ms_e, ms_ebar, occupancy, streaks = {}, {}, {}, {}
    for j in range(cfg.n_targets):
        e = np.array([r.metrics.e_norm[j] for r in post])
        ebar = np.array([r.metrics.ebar_norm[j] for r in post])
        ms_e[j] = float(np.mean(e**2))
        ms_ebar[j] = float(np.mean(ebar**2))
        occupancy[j] = float(np.mean(e <= 0.4))
        streak = best = 0
        for r in records:
            streak = streak + 1 if r.metrics.force_free[j] else 0
            best = max(best, streak)
        streaks[j] = best
    return RunSummary(
        seed=cfg.seed,
        steps=cfg.steps,
        n_drones=cfg.n_drones,
        n_targets=cfg.n_targets,
        pairs=pairs,
        assignment_rounds=rounds,
        transient_cutoff=cut,
        ms_e=ms_e,
        ms_ebar=ms_ebar,
        e_band_occupancy=occupancy,
        min_drone_dist=float(min(r.metrics.min_drone_dist for r in records)),
        min_obstacle_dist=float(min(r.metrics.min_obstacle_dist for r in records)),
        clamp_events=clamp_events,
        degenerate_events=degenerate_events,
        max_z_drift=max_z_drift,
        max_force_free_streak=streaks,
        rep_force_instants=rep_instants,
        inter_force_instants=inter_instants,
    )


@dataclass
class MonteCarloResult:
    """Aggregate of several runs of the same scenario under different seeds."""

    seeds: list[int]
    summaries: list[RunSummary]
    failures: dict[int, str]
    pooled_e_sq: dict[int, np.ndarray]  # target -> post-transient squared e norms
    pooled_ebar_sq: dict[int, np.ndarray]
    pooled_e_norm: dict[int, np.ndarray]
    min_drone_dists: np.ndarray  # per-step minima concatenated over runs
    min_obstacle_dists: np.ndarray

    def quantiles(self, probs=(0.5, 0.9, 0.99)) -> dict:
        out = {}
        for j in sorted(self.pooled_e_norm):
            e = self.pooled_e_norm[j]
            ebar = np.sqrt(self.pooled_ebar_sq[j])
            out[j] = {
                "e_norm": {str(p): float(np.quantile(e, p)) for p in probs},
                "ebar_norm": {str(p): float(np.quantile(ebar, p)) for p in probs},
            }
        return out

    def to_json_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "failures": {str(s): msg for s, msg in self.failures.items()},
            "per_seed": [s.to_json_dict() for s in self.summaries],
            "quantiles": {str(j): q for j, q in self.quantiles().items()},
            "min_drone_dist": float(self.min_drone_dists.min())
            if self.min_drone_dists.size
            else None,
            "min_obstacle_dist": float(self.min_obstacle_dists.min())
            if self.min_obstacle_dists.size
            else None,
        }


def run_monte_carlo(
    cfg: ScenarioConfig,
    seeds: list[int],
    out_dir: str | Path | None = None,
    keep_records: bool = False,
) -> MonteCarloResult:
    """Run the scenario once per seed and pool post-transient statistics.

    A failed run is recorded under its seed and does not abort the batch.
    When out_dir is given each run's full log is written under
    seed_<n>/ before its records are dropped.
    """
    if not seeds:
        raise SimulationError("need at least one seed")
    summaries: list[RunSummary] = []
    failures: dict[int, str] = {}
    pooled_e_sq: dict[int, list[np.ndarray]] = {}
    pooled_ebar_sq: dict[int, list[np.ndarray]] = {}
    pooled_e_norm: dict[int, list[np.ndarray]] = {}
    dd_all, do_all = [], []
    kept: list[RunResult] = []
    for seed in seeds:
        try:
            result = run_scenario(cfg.with_seed(seed))
        except SimulationError as exc:
            failures[seed] = str(exc)
            continue
        if out_dir is not None:
            write_run(Path(out_dir) / f"seed_{seed}", result)
        summaries.append(result.summary)
        cut = cfg.transient_cutoff
        for j in range(cfg.n_targets):
            e = result.e_norms(j)[cut:]
            ebar = result.ebar_norms(j)[cut:]
            pooled_e_sq.setdefault(j, []).append(e**2)
            pooled_ebar_sq.setdefault(j, []).append(ebar**2)
            pooled_e_norm.setdefault(j, []).append(e)
        dd_all.append(result.metric_series("min_drone_dist"))
        do_all.append(result.metric_series("min_obstacle_dist"))
        if keep_records:
            kept.append(result)
    mc = MonteCarloResult(
        seeds=list(seeds),
        summaries=summaries,
        failures=failures,
        pooled_e_sq={j: np.concatenate(v) for j, v in pooled_e_sq.items()},
        pooled_ebar_sq={j: np.concatenate(v) for j, v in pooled_ebar_sq.items()},
        pooled_e_norm={j: np.concatenate(v) for j, v in pooled_e_norm.items()},
        min_drone_dists=np.concatenate(dd_all) if dd_all else np.array([]),
        min_obstacle_dists=np.concatenate(do_all) if do_all else np.array([]),
    )
    if out_dir is not None:
        write_monte_carlo(Path(out_dir), mc)
    if keep_records:
        mc.runs = kept  # type: ignore[attr-defined]
    return mc
