"""Gramian assembly, error bounds, and the collision audit."""

import numpy as np
import pytest

from encirclesim import (
    AnalysisError,
    ConfigurationError,
    SystemMatrices,
    collision_audit,
    controllability_gramian,
    covariance_bounds,
    observability_gramian,
    preset_shape,
    encirclement_bounds,
)
from encirclesim.model import PresetShape

MATS = SystemMatrices(t=0.8)
SHAPE = PresetShape(rho=0.5, ell=24)


def on_shape_window(length, k_end=100):
    """Pair positions on the orbit baseline over the trailing window."""
    ps, vs = [], []
    for m in range(length):
        p2 = 2.0 * preset_shape(k_end - m, SHAPE)
        ps.append(np.array([p2[0], p2[1], 0.0]))
        vs.append(0.05)
    return ps, vs


def test_on_shape_window_is_observable():
    ps, vs = on_shape_window(8)
    rep = observability_gramian(ps, vs, MATS)
    assert rep.rank == 4
    assert rep.eig_min > 0
    assert rep.observable
    assert np.allclose(rep.O1, rep.O1.T, atol=1e-12)


def test_minimum_window_length_is_four():
    ps, vs = on_shape_window(4)
    rep = observability_gramian(ps, vs, MATS)
    assert rep.rank == 4
    with pytest.raises(AnalysisError):
        observability_gramian(ps[:3], vs[:3], MATS)
    with pytest.raises(AnalysisError):
        observability_gramian([], [], MATS)


def test_collinear_window_is_flagged():
    p = np.array([1.0, 0.5, 0.0])
    ps = [p.copy() for _ in range(6)]
    vs = [0.05] * 6
    rep = observability_gramian(ps, vs, MATS)
    assert rep.rank <= 2
    assert not rep.observable


def test_variance_scaling_leaves_rank_alone():
    ps, vs = on_shape_window(8)
    base = observability_gramian(ps, vs, MATS)
    scaled = observability_gramian(ps, [100.0 * v for v in vs], MATS)
    assert scaled.rank == base.rank
    assert np.allclose(scaled.O1, base.O1 / 100.0, rtol=1e-10)


def test_o2_row_structure():
    ps, vs = on_shape_window(5)
    rep = observability_gramian(ps, vs, MATS)
    for m, p in enumerate(ps):
        assert np.allclose(rep.O2[m, :2], -2.0 * p[:2])
        assert np.allclose(rep.O2[m, 2:], 2.0 * m * MATS.t * p[:2])


def test_controllability_reference_case():
    rep = controllability_gramian(1, 0.8, 0.05 * np.eye(2))
    assert rep.gramian.shape == (4, 4)
    assert rep.positive_definite
    # direct assembly oracle
    h = np.array([[0.32, 0.96], [0.8, 0.8]])
    h2 = np.kron(h, np.eye(2))
    expected = h2 @ (0.05 * np.eye(4)) @ h2.T
    assert np.allclose(rep.gramian, expected, atol=1e-12)


def test_controllability_zero_noise_fails_pd():
    rep = controllability_gramian(1, 0.8, np.zeros((2, 2)))
    assert not rep.gramian.any()
    assert not rep.positive_definite


def test_controllability_scales_linearly_in_noise():
    a = controllability_gramian(3, 0.8, 0.05 * np.eye(2))
    b = controllability_gramian(3, 0.8, 0.10 * np.eye(2))
    assert np.allclose(b.eigenvalues, 2.0 * a.eigenvalues, rtol=1e-10)


def test_controllability_validation():
    with pytest.raises(ConfigurationError):
        controllability_gramian(0, 0.8, np.eye(2))
    with pytest.raises(ConfigurationError):
        controllability_gramian(2, -1.0, np.eye(2))
    with pytest.raises(ConfigurationError):
        controllability_gramian(2, 0.8, np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_theorem_bound_arithmetic():
    # additive term at the reference parameters
    assert 2 * MATS.t**4 * 0.05 == pytest.approx(0.04096)


def test_theorem_bound_noise_free_run_is_exact():
    e = {0: np.zeros(1500)}
    ebar = {0: np.zeros(1500)}
    checks = encirclement_bounds(e, ebar, MATS, q_hi=0.0)
    assert checks[0].bound == 0.0
    assert checks[0].ok


def test_theorem_bound_detects_violation():
    e = {0: np.full(1500, 0.01)}
    ebar = {0: np.full(1500, 10.0)}
    checks = encirclement_bounds(e, ebar, MATS, q_hi=0.05)
    assert not checks[0].ok


def test_theorem_bound_requires_samples():
    with pytest.raises(AnalysisError):
        encirclement_bounds({0: np.zeros(10)}, {0: np.zeros(10)}, MATS, q_hi=0.05)
    with pytest.raises(AnalysisError):
        encirclement_bounds({}, {}, MATS, q_hi=0.05)
    with pytest.raises(AnalysisError):
        encirclement_bounds({0: np.zeros(1500)}, {1: np.zeros(1500)}, MATS, q_hi=0.05)


def test_collision_audit_vacuous_without_obstacles():
    audit = collision_audit(np.full(10, np.inf), np.full(10, np.inf), 0.1, 0.2)
    assert audit.clean
    assert audit.min_obstacle_distance == np.inf


def test_collision_audit_flags_and_reports():
    dd = np.array([1.0, 0.15, 0.5])
    do = np.array([0.5, 0.3, 0.19])
    audit = collision_audit(dd, do, drone_radius=0.1, r_safe=0.2)
    assert audit.drone_violations == [1]
    assert audit.obstacle_violations == [2]
    assert audit.min_drone_distance == pytest.approx(0.15)
    assert not audit.clean


def test_covariance_bounds_band_is_positive_and_ordered():
    ps, vs = on_shape_window(31)
    obs = observability_gramian(ps, vs, MATS)
    ctrl = controllability_gramian(30, 0.8, 2e-4 * np.eye(2))
    bounds = covariance_bounds(
        obs_eig_min=obs.eig_min,
        obs_eig_max=obs.eig_max,
        ctrl_eig_min=float(ctrl.eigenvalues.min()),
        ctrl_eig_max=float(ctrl.eigenvalues.max()),
        m1=30,
        mats=MATS,
        zeta0=np.eye(4),
        q_hi=2e-4,
        c_hi=1.0,
        var_lo=min(vs),
    )
    lo, hi = bounds.eig_band
    assert 0 < lo < hi


def test_reference_run_covariance_stays_in_predicted_band():
    """Filter covariance eigenvalues sit inside the Gramian-derived band."""
    from encirclesim import golden_config, run_scenario

    res = run_scenario(golden_config(seed=0, steps=400))
    m1 = 30
    q_hi = 2e-4
    lo_all, hi_all = np.inf, 0.0
    for j in range(3):
        ps, vs = res.pair_history(j)
        obs = observability_gramian(ps[: m1 + 1], vs[: m1 + 1], MATS)
        ctrl = controllability_gramian(m1, MATS.t, q_hi * np.eye(2))
        c_hi = max(float(p[:2] @ p[:2]) for p in ps)
        bounds = covariance_bounds(
            obs_eig_min=obs.eig_min,
            obs_eig_max=obs.eig_max,
            ctrl_eig_min=float(ctrl.eigenvalues.min()),
            ctrl_eig_max=float(ctrl.eigenvalues.max()),
            m1=m1,
            mats=MATS,
            zeta0=np.eye(4),
            q_hi=q_hi,
            c_hi=c_hi,
            var_lo=min(vs),
        )
        lo, hi = bounds.eig_band
        eig_lo = np.array([r.metrics.zeta_eig_min[j] for r in res.records[1:]])
        eig_hi = np.array([r.metrics.zeta_eig_max[j] for r in res.records[1:]])
        assert eig_lo.min() >= lo
        assert eig_hi.max() <= hi
        assert (eig_hi / eig_lo).max() < 1e8  # condition number ceiling
        lo_all, hi_all = min(lo_all, lo), max(hi_all, hi)
    assert 0 < lo_all < hi_all


def test_head_on_crossing_audit_is_clean():
    """Scripted opposing targets drag their pairs through each other's path;
    the interaction field keeps sampled separations above physical overlap."""
    from encirclesim import run_scenario
    from encirclesim.scenario import DroneInit, RunFlags, ScenarioConfig, TargetInit

    offset, speed = 0.3, 0.25
    cfg = ScenarioConfig(
        t=0.8, steps=80, seed=0,
        drones=(
            DroneInit(position=[-5.5, -offset, 2.0], velocity=[0, 0, 0]),
            DroneInit(position=[-4.5, -offset, 2.0], velocity=[0, 0, 0]),
            DroneInit(position=[4.5, offset, 2.0], velocity=[0, 0, 0]),
            DroneInit(position=[5.5, offset, 2.0], velocity=[0, 0, 0]),
        ),
        targets=(
            TargetInit(position=[-5.0, -offset], velocity=[speed, 0.0], q_process=np.asarray(2e-4)),
            TargetInit(position=[5.0, offset], velocity=[-speed, 0.0], q_process=np.asarray(2e-4)),
        ),
        flags=RunFlags(noise=False, perfect_estimate=True),
        shape_phase_spacing=16,
        transient_cutoff=5,
    )
    res = run_scenario(cfg)
    dd = res.metric_series("min_drone_dist")
    audit = collision_audit(
        dd, res.metric_series("min_obstacle_dist"),
        drone_radius=cfg.controller.drone_radius, r_safe=cfg.controller.r_safe,
    )
    assert audit.clean
    assert audit.min_drone_distance > 2 * cfg.controller.drone_radius
    assert res.summary.inter_force_instants > 0  # the barrier actually engaged
