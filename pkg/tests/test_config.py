import json

import pytest

from krst.config import ABLATIONS, PRESETS, apply_ablation, build_config
from krst.errors import ConfigError


def test_desk_defaults():
    cfg = build_config()
    assert (cfg.T, cfg.K, cfg.C, cfg.C_w, cfg.H) == (4, 4, 64, 64, 2)
    assert (cfg.alpha_spatial, cfg.alpha_temporal) == (0.6, 0.8)
    assert (cfg.pooling_spatial, cfg.pooling_aggregation, cfg.pooling_temporal) == ("max", "max", "sum")


@pytest.mark.parametrize("task,batch", [("multichoice_relation", 64), ("frame_relpos", 128), ("action_count", 128)])
def test_paper_preset_pins(task, batch):
    cfg = build_config(preset="paper", overrides={"task": task})
    assert (cfg.T, cfg.K, cfg.C, cfg.C_s, cfg.C_o, cfg.C_w) == (20, 10, 512, 512, 512, 512)
    assert (cfg.H, cfg.alpha_spatial, cfg.alpha_temporal) == (2, 0.6, 0.8)
    assert (cfg.dropout, cfg.lr, cfg.epochs, cfg.batch_size) == (0.3, 1e-4, 30, batch)
    assert cfg.count_range == (1, 10)


def test_file_then_overrides(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"epochs": 3, "lr": 0.01, "relative": False}))
    cfg = build_config(path, {"epochs": 5})
    assert cfg.epochs == 5 and cfg.lr == 0.01 and cfg.relative is False


def test_every_field_addressable(tmp_path):
    d = build_config().to_dict()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    assert build_config(path).to_dict() == d


@pytest.mark.parametrize("overrides", [{"bogus": 1}, {"task": "nope"}, {"epochs": "many"}, {"relative": False, "absolute": False},
                                       {"pooling_temporal": "median"}, {"batch_size": 0}])
def test_invalid(overrides):
    with pytest.raises(ConfigError):
        build_config(overrides=overrides)


def test_bad_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        build_config(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        build_config(tmp_path / "missing.json")


def test_bad_preset():
    with pytest.raises(ConfigError):
        build_config(preset="huge")
    assert set(PRESETS) == {"desk", "paper"}


@pytest.mark.parametrize("name", ABLATIONS)
def test_ablation_flips_one_flag(name):
    base = build_config().to_dict()
    ab = apply_ablation(build_config(), name).to_dict()
    assert {k for k in base if base[k] != ab[k]} == {name}


def test_unknown_ablation():
    with pytest.raises(ConfigError):
        apply_ablation(build_config(), "everything")
