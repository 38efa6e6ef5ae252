"""Noisy range measurements, visibility sets, and deterministic noise streams.

Every drone measures the ground-projected distance to each target inside
its measurement radius, drawing f independent samples per sampling
period.  Noise comes from per-(purpose, drone, target, step) substreams
of the scenario seed, so a run is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TargetOutOfRange
from .model import DroneState, TargetState

# Substream domains; keeping them distinct guarantees measurement noise
# never aliases process noise for any (ids, step) combination.
_DOMAIN_MEASUREMENT = 0
_DOMAIN_PROCESS = 1


class NoiseStreams:
    """Factory of independent RNG substreams derived from one scenario seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def measurement_rng(self, drone_id: int, target_id: int, step: int) -> np.random.Generator:
        key = (_DOMAIN_MEASUREMENT, drone_id, target_id, step)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def process_rng(self, target_id: int, step: int) -> np.random.Generator:
        key = (_DOMAIN_PROCESS, target_id, step)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))


@dataclass(frozen=True)
class SensorConfig:
    """Range sensor parameters shared by the fleet.

    q is the per-drone range noise variance (m^2), f the number of
    repeated samples per period, r1/r2 the communication and measurement
    radii.  r1 >= 2*r2 so any two drones that can measure the same target
    can also talk to each other.
    """

    q: float = 0.005
    f: int = 100
    r1: float = 10.0
    r2: float = 5.0

    def __post_init__(self):
        if self.q <= 0:
            raise ConfigurationError(f"measurement noise variance must be positive, got {self.q}")
        if not (isinstance(self.f, int) and self.f >= 1):
            raise ConfigurationError(f"samples per period must be a positive integer, got {self.f!r}")
        if self.r2 <= 0 or self.r1 < 2 * self.r2:
            raise ConfigurationError(
                f"radii must satisfy r2 > 0 and r1 >= 2*r2, got r1={self.r1}, r2={self.r2}"
            )


@dataclass(frozen=True)
class RangeBatch:
    """One period's worth of repeated range samples for a (drone, target) pair."""

    drone_id: int
    target_id: int
    step: int
    samples: np.ndarray  # (f,) meters; kept as drawn, may be negative
    q: float  # noise variance the samples were drawn with (declared q_i)

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ConfigurationError("a range batch needs at least one sample")
        if not np.isfinite(self.samples).all():
            raise ConfigurationError("non-finite range sample")

    @property
    def mean_range(self) -> float:
        return float(self.samples.mean())

    @property
    def mean_square(self) -> float:
        return float(np.mean(self.samples**2))


def true_range(drone: DroneState, target: TargetState) -> float:
    """Ground-projected distance from drone to target."""
    return float(np.linalg.norm(drone.ground_position - target.position))


def measure_batch(
    drone: DroneState,
    target: TargetState,
    cfg: SensorConfig,
    rng: np.random.Generator,
    step: int = 0,
    noise: bool = True,
) -> RangeBatch:
    """Draw the f-sample range batch for one (drone, target) pair.

    Samples are the true projected distance plus i.i.d. N(0, q) noise and
    are never clamped here; downstream consumers square them.  Raises
    TargetOutOfRange when the target lies beyond the measurement radius.
    """
    d = true_range(drone, target)
    if d > cfg.r2:
        raise TargetOutOfRange(
            f"target {target.id} at {d:.3f} m exceeds measurement radius {cfg.r2} m of drone {drone.id}"
        )
    if noise:
        samples = d + rng.normal(0.0, np.sqrt(cfg.q), size=cfg.f)
    else:
        samples = np.full(cfg.f, d)
    return RangeBatch(drone_id=drone.id, target_id=target.id, step=step, samples=samples, q=cfg.q)


def visible_targets(drone: DroneState, targets: list[TargetState], cfg: SensorConfig) -> set[int]:
    """Ids of targets within the measurement radius (boundary inclusive)."""
    return {tg.id for tg in targets if true_range(drone, tg) <= cfg.r2}


def neighbor_set(drone: DroneState, drones: list[DroneState], cfg: SensorConfig) -> set[int]:
    """Ids of other drones within communication range (boundary inclusive)."""
    return {
        other.id
        for other in drones
        if other.id != drone.id and np.linalg.norm(drone.position - other.position) <= cfg.r1
    }
