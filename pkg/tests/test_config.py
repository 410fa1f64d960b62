"""Tests for run-configuration merging, validation, and overrides."""

import math

import pytest

from lrukit.config import (
    ConfigError,
    build_config,
    load_config_file,
    parse_override_value,
)


def test_defaults_resolve_to_a_complete_document():
    cfg = build_config()
    doc = cfg.echo()
    assert set(doc) == {"model", "ring", "optim", "task", "seed", "output_dir"}
    assert doc["seed"] == 0
    assert doc["output_dir"] == "runs"
    assert doc["task"] == {"name": None, "params": {}}
    assert cfg.model.depth == 2
    assert cfg.optim.base_lr == 1e-3
    assert cfg.ring.r_min == 0.0 and cfg.ring.r_max == 1.0


def test_echo_returns_an_independent_copy():
    cfg = build_config()
    doc = cfg.echo()
    doc["model"]["depth"] = 99
    doc["task"]["params"]["x"] = 1
    fresh = cfg.echo()
    assert fresh["model"]["depth"] == 2
    assert fresh["task"]["params"] == {}


def test_file_values_override_defaults():
    cfg = build_config(
        {
            "model": {"depth": 4, "pooling": "last"},
            "ring": {"r_min": 0.5, "r_max": 0.99},
            "optim": {"base_lr": 3e-4, "total_steps": 50},
            "task": {"name": "gain", "params": {"trials": 3}},
            "seed": 11,
            "output_dir": "artifacts",
        }
    )
    assert cfg.model.depth == 4
    assert cfg.model.pooling == "last"
    assert cfg.model.width == 8  # untouched default
    assert cfg.ring.r_min == 0.5
    assert cfg.optim.base_lr == 3e-4
    assert cfg.task_name == "gain"
    assert cfg.task_params == {"trials": 3}
    assert cfg.seed == 11
    assert cfg.output_dir == "artifacts"
    assert cfg.model.ring == cfg.ring  # single source of ring settings


def test_overrides_beat_file_values():
    cfg = build_config(
        {"ring": {"r_max": 0.9}, "seed": 5},
        overrides={"ring.r_max": 0.99, "seed": 7, "model.depth": 3},
    )
    assert cfg.ring.r_max == 0.99
    assert cfg.seed == 7
    assert cfg.model.depth == 3
    assert cfg.echo()["ring"]["r_max"] == 0.99  # echo reflects the winner


def test_unknown_keys_are_rejected_everywhere():
    with pytest.raises(ConfigError, match="unknown config section"):
        build_config({"models": {}})
    with pytest.raises(ConfigError, match="unknown config key model.hidden"):
        build_config({"model": {"hidden": 9}})
    with pytest.raises(ConfigError, match="unknown config key ring.radius"):
        build_config({"ring": {"radius": 1.0}})
    with pytest.raises(ConfigError, match="unknown config key"):
        build_config(overrides={"optim.momentum": 0.9})
    with pytest.raises(ConfigError, match="unknown config path"):
        build_config(overrides={"nonsense.key": 1})


def test_model_ring_subsection_is_rejected():
    with pytest.raises(ConfigError, match="model.ring"):
        build_config(overrides={"model.ring": {"r_min": 0.5}})
    with pytest.raises(ConfigError, match="unknown config key model.ring"):
        build_config({"model": {"ring": {"r_min": 0.5}}})


def test_task_params_are_free_form():
    cfg = build_config(
        {"task": {"name": "gain", "params": {"anything": [1, 2]}}},
        overrides={"task.params.extra": "white_noise"},
    )
    assert cfg.task_params == {"anything": [1, 2], "extra": "white_noise"}


def test_invalid_section_values_raise_config_error():
    with pytest.raises(ConfigError, match="invalid ring section"):
        build_config({"ring": {"r_min": 0.9, "r_max": 0.5}})
    with pytest.raises(ConfigError, match="invalid model section"):
        build_config({"model": {"depth": 0}})
    with pytest.raises(ConfigError, match="invalid optim section"):
        build_config({"optim": {"base_lr": -1.0}})
    with pytest.raises(ConfigError, match="must be an object"):
        build_config({"model": 3})
    with pytest.raises(ConfigError, match="must contain a JSON object"):
        build_config([1, 2])


def test_scalar_validation():
    with pytest.raises(ConfigError, match="seed"):
        build_config({"seed": "zero"})
    with pytest.raises(ConfigError, match="seed"):
        build_config({"seed": True})
    with pytest.raises(ConfigError, match="output_dir"):
        build_config({"output_dir": ""})
    with pytest.raises(ConfigError, match="task.name"):
        build_config({"task": {"name": 7}})
    with pytest.raises(ConfigError, match="task.params"):
        build_config({"task": {"params": [1]}})


def test_malformed_override_paths():
    with pytest.raises(ConfigError, match="malformed override path"):
        build_config(overrides={"model..depth": 1})
    with pytest.raises(ConfigError, match="unknown config path"):
        build_config(overrides={"seed.sub": 1})


def test_parse_override_value_types():
    assert parse_override_value("0.99") == 0.99
    assert parse_override_value("42") == 42
    assert parse_override_value("true") is True
    assert parse_override_value("null") is None
    assert parse_override_value("[1, 2]") == [1, 2]
    assert parse_override_value("mean") == "mean"
    assert parse_override_value("1e-4") == pytest.approx(1e-4)
    assert math.isinf(parse_override_value("Infinity"))


def test_load_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{"seed": 12, "ring": {"r_max": 0.95}}')
    cfg = build_config(load_config_file(path))
    assert cfg.seed == 12
    assert cfg.ring.r_max == 0.95
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config_file(bad)


def test_resolved_document_round_trips_through_build():
    cfg = build_config(
        {"model": {"depth": 3}, "optim": {"total_steps": 77}},
        overrides={"ring.r_min": 0.25},
    )
    again = build_config(cfg.echo())
    assert again.model == cfg.model
    assert again.optim == cfg.optim
    assert again.ring == cfg.ring
    assert again.echo() == cfg.echo()
