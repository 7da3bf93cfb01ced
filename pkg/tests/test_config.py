import json

import pytest

from biphoton.config import (ConfigError, ExperimentConfig, FrameCounts, config_from_dict,
                             config_to_dict, load_config, save_config)
from biphoton.simulator import OpticsMode


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.pump.waist_x == 766e-6 and cfg.pump.wavelength == 405e-9
    assert cfg.crystal.length == 5e-3 and cfg.crystal.alpha == 0.455
    assert cfg.near.mode is OpticsMode.NEAR_FIELD and cfg.far.mode is OpticsMode.FAR_FIELD
    assert cfg.camera.width_px == 64 and cfg.camera.pixel_pitch == 16e-6


def test_round_trip(tmp_path):
    cfg = ExperimentConfig(seed=123).with_beta(0.193)
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert config_from_dict(json.loads(path.read_text())) == cfg


def test_partial_document_uses_defaults():
    cfg = config_from_dict({"schema_version": 1, "pump": {"waist_y": 100e-6}, "seed": 4})
    assert cfg.pump.waist_y == 100e-6 and cfg.pump.waist_x == 766e-6 and cfg.seed == 4


@pytest.mark.parametrize("doc", [
    {"pump": {}},                                        # no schema version
    {"schema_version": 2},
    {"schema_version": 1, "pumpp": {}},                   # typo at top level
    {"schema_version": 1, "camera": {"gain": 2}},          # typo nested
    {"schema_version": 1, "frames": {"near": 0}},          # too few frames
    {"schema_version": 1, "frames": {"dark": 1.5}},
    {"schema_version": 1, "pump": {"waist_x": -1}},
    {"schema_version": 1, "crystal": {"alpha": 2}},
    {"schema_version": 1, "near": {"mode": "far"}},
    {"schema_version": 1, "seed": -3},
    {"schema_version": 1, "camera": "big"},
])
def test_invalid_documents(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_malformed_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_frame_counts_minimum():
    with pytest.raises(ConfigError):
        FrameCounts(near=1)


def test_with_beta_and_override():
    cfg = ExperimentConfig().with_beta(0.5).override(seed=9, frames=100)
    assert cfg.pump.waist_y == pytest.approx(383e-6)
    assert cfg.seed == 9 and cfg.frames.near == cfg.frames.far == 100
    with pytest.raises(ConfigError):
        ExperimentConfig().with_beta(0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig().override(frames=1)


def test_dict_is_json_ready():
    d = config_to_dict(ExperimentConfig())
    assert d["schema_version"] == 1 and d["near"]["mode"] == "near"
    json.dumps(d)
