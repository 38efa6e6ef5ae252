"""Range batches, visibility sets, and noise-stream determinism."""

import numpy as np
import pytest

from encirclesim import (
    ConfigurationError,
    DroneState,
    NoiseStreams,
    SensorConfig,
    TargetOutOfRange,
    TargetState,
    measure_batch,
    neighbor_set,
    visible_targets,
)

CFG = SensorConfig()

DRONES_XY = [(1.5, 2.0), (2.0, 2.0), (2.5, 2.0), (3.0, 2.0), (3.5, 2.0), (4.0, 2.0)]
TARGETS_XY = [(-2.0, 2.5), (2.0, 1.0), (3.0, 2.5)]


def _drone(x, y, z=2.0, id=0):
    return DroneState(position=[x, y, z], velocity=[0, 0, 0], id=id)


def _target(x, y, id=0):
    return TargetState(position=[x, y], velocity=[0, 0], id=id)


def test_noise_free_batch_equals_true_distance():
    rng = np.random.default_rng(0)
    batch = measure_batch(_drone(0, 0), _target(3, 4), CFG, rng, noise=False)
    assert np.all(batch.samples == 5.0)


def test_batch_sample_count_and_metadata():
    streams = NoiseStreams(seed=1)
    batch = measure_batch(
        _drone(0, 0, id=2), _target(1, 1, id=1), CFG, streams.measurement_rng(2, 1, 7), step=7
    )
    assert batch.samples.shape == (CFG.f,)
    assert (batch.drone_id, batch.target_id, batch.step, batch.q) == (2, 1, 7, CFG.q)


def test_sample_variance_matches_configured_noise():
    # Monte-Carlo estimate of the per-sample variance over 1e5 draws.
    cfg = SensorConfig(q=0.005, f=100_000)
    rng = np.random.default_rng(42)
    batch = measure_batch(_drone(0, 0), _target(1, 0), cfg, rng)
    var = np.var(batch.samples - 1.0)
    assert abs(var - cfg.q) / cfg.q < 0.05


def test_out_of_range_raises():
    with pytest.raises(TargetOutOfRange):
        measure_batch(_drone(0, 0), _target(10, 0), CFG, np.random.default_rng(0))


def test_visible_targets_boundary_inclusive():
    drone = _drone(0, 0)
    assert visible_targets(drone, [_target(10, 0, id=0)], CFG) == set()
    assert visible_targets(drone, [_target(3, 4, id=0)], CFG) == {0}  # distance exactly 5


def test_reference_layout_drone_one_sees_all_targets():
    drone = _drone(*DRONES_XY[0], id=0)
    targets = [_target(x, y, id=j) for j, (x, y) in enumerate(TARGETS_XY)]
    assert visible_targets(drone, targets, CFG) == {0, 1, 2}
    # and the farthest drone does not see the farthest target
    far = _drone(*DRONES_XY[5], id=5)
    assert 0 not in visible_targets(far, targets, CFG)


def test_neighbor_set():
    a = _drone(0, 0, id=0)
    b = _drone(0.5, 0, id=1)
    assert neighbor_set(a, [a, b], CFG) == {1}
    assert neighbor_set(b, [a, b], CFG) == {0}
    lonely = _drone(100, 100, id=2)
    assert neighbor_set(lonely, [a, b, lonely], CFG) == set()


def test_reference_layout_fully_connected():
    drones = [_drone(x, y, id=i) for i, (x, y) in enumerate(DRONES_XY)]
    for d in drones:
        assert neighbor_set(d, drones, CFG) == {i for i in range(6) if i != d.id}


def test_streams_are_reproducible_and_distinct():
    s1, s2 = NoiseStreams(seed=9), NoiseStreams(seed=9)
    drone, target = _drone(0, 0, id=1), _target(1, 0, id=0)
    a = measure_batch(drone, target, CFG, s1.measurement_rng(1, 0, 3), step=3)
    b = measure_batch(drone, target, CFG, s2.measurement_rng(1, 0, 3), step=3)
    assert np.array_equal(a.samples, b.samples)
    c = measure_batch(drone, target, CFG, s1.measurement_rng(1, 0, 4), step=4)
    assert not np.array_equal(a.samples, c.samples)


def test_sensor_config_invariants():
    with pytest.raises(ConfigurationError):
        SensorConfig(q=0.0)
    with pytest.raises(ConfigurationError):
        SensorConfig(f=0)
    with pytest.raises(ConfigurationError):
        SensorConfig(r1=9.0, r2=5.0)  # violates r1 >= 2*r2
