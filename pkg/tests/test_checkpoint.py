"""Tests for the flat binary checkpoint format."""

import json

import numpy as np
import pytest

from lrukit import load_params, save_params


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {
        "encoder.w": rng.normal(size=(3, 5)),
        "blocks.0.lru.nu_log": rng.normal(size=7),
        "head.b": rng.normal(size=(2,)),
        "oddball": rng.normal(size=(2, 1, 4)),
    }
    # Include values that stress the encoding.
    params["encoder.w"][0, 0] = np.pi * 1e-300
    params["encoder.w"][0, 1] = -1.0 / 3.0
    base = tmp_path / "ckpt"
    bin_path, manifest_path = save_params(params, base)
    assert bin_path == tmp_path / "ckpt.bin"
    assert manifest_path == tmp_path / "ckpt.json"
    restored = load_params(base)
    assert set(restored) == set(params)
    for name, value in params.items():
        assert restored[name].dtype == np.float64
        np.testing.assert_array_equal(restored[name], value)


def test_zero_dimensional_tensor_round_trips(tmp_path):
    params = {"scalar": np.array(2.5), "vec": np.arange(3.0)}
    save_params(params, tmp_path / "c")
    restored = load_params(tmp_path / "c")
    assert restored["scalar"].shape == ()
    assert restored["scalar"][()] == 2.5
    np.testing.assert_array_equal(restored["vec"], np.arange(3.0))


def test_empty_params_round_trip(tmp_path):
    save_params({}, tmp_path / "empty")
    assert load_params(tmp_path / "empty") == {}


def test_suffixed_base_names_are_normalized(tmp_path):
    params = {"w": np.ones(2)}
    save_params(params, tmp_path / "model.bin")
    restored = load_params(tmp_path / "model.json")
    np.testing.assert_array_equal(restored["w"], np.ones(2))


def test_manifest_is_documented_json(tmp_path):
    params = {"b": np.zeros((2, 2)), "a": np.zeros(3)}
    _, manifest_path = save_params(params, tmp_path / "m")
    manifest = json.loads(manifest_path.read_text())
    assert manifest["format"] == "float64-le"
    assert manifest["total_elements"] == 7
    names = [t["name"] for t in manifest["tensors"]]
    assert names == sorted(names)  # deterministic order
    offsets = {t["name"]: t["offset"] for t in manifest["tensors"]}
    assert offsets == {"a": 0, "b": 3}


def test_binary_layout_is_little_endian_row_major(tmp_path):
    arr = np.arange(6.0).reshape(2, 3)
    bin_path, _ = save_params({"w": arr}, tmp_path / "layout")
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
    np.testing.assert_array_equal(raw, np.arange(6.0))


def test_non_float_input_is_converted(tmp_path):
    save_params({"ints": np.array([1, 2, 3])}, tmp_path / "i")
    restored = load_params(tmp_path / "i")
    assert restored["ints"].dtype == np.float64
    np.testing.assert_array_equal(restored["ints"], [1.0, 2.0, 3.0])


def test_load_rejects_unknown_format(tmp_path):
    save_params({"w": np.ones(1)}, tmp_path / "f")
    manifest_path = tmp_path / "f.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["format"] = "float32-be"
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="unsupported checkpoint format"):
        load_params(tmp_path / "f")


def test_load_rejects_truncated_binary(tmp_path):
    bin_path, _ = save_params({"w": np.ones(4)}, tmp_path / "t")
    bin_path.write_bytes(bin_path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="size mismatch"):
        load_params(tmp_path / "t")


def test_load_rejects_overrunning_tensor(tmp_path):
    save_params({"w": np.ones(4)}, tmp_path / "o")
    manifest_path = tmp_path / "o.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["tensors"][0]["offset"] = 2  # now extends past the file end
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="overruns"):
        load_params(tmp_path / "o")


def test_checkpoint_restores_model_params(tmp_path):
    from lrukit import ModelConfig, ModelParams, RingConfig, make_generator, model_init

    cfg = ModelConfig(
        depth=2, width=4, state_dim=3, in_features=2, out_features=2,
        ring=RingConfig(r_min=0.4, r_max=0.9),
    )
    params = model_init(cfg, make_generator(9))
    save_params(params.to_dict(), tmp_path / "model")
    restored = ModelParams.from_dict(load_params(tmp_path / "model"))
    for name, value in params.to_dict().items():
        np.testing.assert_array_equal(restored.to_dict()[name], value)
