"""Config validation, file loading, and the bundled schema."""

import json

import numpy as np
import pytest

from encirclesim import ConfigurationError, golden_config, load_config
from encirclesim.scenario import (
    DroneInit,
    ScenarioConfig,
    TargetInit,
    config_from_dict,
)


def minimal_dict(**overrides):
    raw = {
        "t": 0.8,
        "steps": 10,
        "drones": [
            {"position": [1.0, 0.0, 2.0]},
            {"position": [-1.0, 0.0, 2.0]},
        ],
        "targets": [{"position": [0.0, 0.5]}],
    }
    raw.update(overrides)
    return raw


def test_minimal_config_gets_defaults():
    cfg = config_from_dict(minimal_dict())
    assert cfg.sensor.r2 == 5.0
    assert cfg.controller.gamma1 == 0.05
    assert cfg.shape.ell == 24
    assert np.array_equal(cfg.zeta0, np.eye(4))
    assert cfg.targets[0].q_process[0, 0] == pytest.approx(0.05)


def test_schema_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        config_from_dict(minimal_dict(unknown_field=1))


def test_schema_rejects_bad_vectors():
    raw = minimal_dict()
    raw["drones"][0]["position"] = [1.0, 2.0]
    with pytest.raises(ConfigurationError):
        config_from_dict(raw)


def test_drone_count_must_be_twice_targets():
    raw = minimal_dict()
    raw["drones"].append({"position": [0.0, 1.0, 2.0]})
    with pytest.raises(ConfigurationError):
        config_from_dict(raw)


def test_radii_invariant_enforced():
    with pytest.raises(ConfigurationError):
        config_from_dict(minimal_dict(sensor={"r1": 9.0, "r2": 5.0}))


def test_zeta0_must_be_positive_definite():
    bad = np.zeros((4, 4)).tolist()
    with pytest.raises(ConfigurationError):
        config_from_dict(minimal_dict(zeta0=bad))


def test_eps_tilde_must_exceed_one():
    with pytest.raises(ConfigurationError):
        config_from_dict(minimal_dict(eps_tilde=1.0))


def test_scalar_process_noise_expands_to_matrix():
    raw = minimal_dict()
    raw["targets"][0]["q_process"] = 0.01
    cfg = config_from_dict(raw)
    assert np.array_equal(cfg.targets[0].q_process, 0.01 * np.eye(2))


def test_json_and_toml_configs_agree(tmp_path):
    raw = minimal_dict(seed=7)
    jpath = tmp_path / "s.json"
    jpath.write_text(json.dumps(raw))
    toml = "\n".join(
        [
            "t = 0.8",
            "steps = 10",
            "seed = 7",
            "[[drones]]",
            "position = [1.0, 0.0, 2.0]",
            "[[drones]]",
            "position = [-1.0, 0.0, 2.0]",
            "[[targets]]",
            "position = [0.0, 0.5]",
        ]
    )
    tpath = tmp_path / "s.toml"
    tpath.write_text(toml)
    a, b = load_config(jpath), load_config(tpath)
    assert a.to_dict() == b.to_dict()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "s.yaml"
    p.write_text("t: 0.8")
    with pytest.raises(ConfigurationError):
        load_config(p)


def test_golden_config_is_valid_and_reproducible():
    a, b = golden_config(), golden_config()
    assert a.to_dict() == b.to_dict()
    assert a.n_drones == 6 and a.n_targets == 3
    assert a.t == 0.8
    assert a.q_hi == pytest.approx(2e-4)
    # scripted courses cover the whole horizon
    for tg in a.targets:
        assert tg.omega_script.shape == (a.steps, 2)


def test_shipped_golden_file_matches_builder():
    from pathlib import Path

    shipped = Path(__file__).resolve().parents[1] / "configs" / "golden.json"
    assert load_config(shipped).to_dict() == golden_config().to_dict()


def test_with_seed_changes_only_seed():
    a = golden_config(seed=0)
    b = a.with_seed(9)
    assert b.seed == 9
    da, db = a.to_dict(), b.to_dict()
    da.pop("seed"), db.pop("seed")
    assert da == db


def test_omega_script_shape_validated():
    with pytest.raises(ConfigurationError):
        TargetInit(
            position=[0, 0], velocity=[0, 0], q_process=np.asarray(0.01),
            omega_script=np.zeros((5, 3)),
        )


def test_direct_constructor_checks():
    with pytest.raises(ConfigurationError):
        ScenarioConfig(
            t=0.8, steps=0, seed=0,
            drones=(DroneInit(position=[0, 0, 2], velocity=[0, 0, 0]),) * 2,
            targets=(TargetInit(position=[0, 0], velocity=[0, 0], q_process=np.asarray(0.01)),),
        )
