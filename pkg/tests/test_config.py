"""Layered configuration loading, validation and hashing."""

from pathlib import Path

import pytest

from src.domain.attack_types import Norm
from src.domain.errors import ConfigurationError, ResourceNotFoundError
from src.domain.experiment_types import ExperimentConfig
from src.env import ToolkitSettings
from src.infrastructure.config.config_loader import ConfigLoader, config_hash, deep_merge, parse_assignment


REPO_ROOT = Path(__file__).resolve().parents[1]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_describe_the_full_grid():
    config = ConfigLoader(environ={}).load()
    assert config.grid.seeds == [0, 17, 337]
    assert len(config.data.channels) == 17
    assert config.attacks.pgd_linf.epsilons is None
    assert config.evaluation.avg_gain_whitelist == {"pgd_linf": [0.1]}


def test_assignments_parse_toml_values():
    assert parse_assignment("training.epochs=3") == {"training": {"epochs": 3}}
    assert parse_assignment("grid.archs=['CNN_Bk4']") == {"grid": {"archs": ["CNN_Bk4"]}}
    assert parse_assignment("data.source=synthetic") == {"data": {"source": "synthetic"}}
    assert parse_assignment("data.synthetic.snr=inf")["data"]["synthetic"]["snr"] == float("inf")
    with pytest.raises(ConfigurationError):
        parse_assignment("training.epochs")
    with pytest.raises(ConfigurationError):
        parse_assignment("=3")


def test_deep_merge_keeps_sibling_keys():
    merged = deep_merge({"a": {"x": 1, "y": 2}, "b": 1}, {"a": {"y": 3}})
    assert merged == {"a": {"x": 1, "y": 3}, "b": 1}


def test_layers_apply_file_then_environment_then_overrides(tmp_path):
    path = write(tmp_path / "exp.toml", "[training]\nepochs = 5\nbatch_size = 8\n\n[grid]\nseeds = [1, 2]\n")
    environ = {"EEGROB_CONFIG__TRAINING__EPOCHS": "7", "EEGROB_CONFIG__TRAINING__LEARNING_RATE": "0.01"}
    config = ConfigLoader(environ=environ).load(path, overrides=["training.learning_rate=0.5"])

    assert config.training.epochs == 7
    assert config.training.batch_size == 8
    assert config.training.learning_rate == 0.5
    assert config.grid.seeds == [1, 2]


def test_unrelated_environment_variables_are_ignored():
    config = ConfigLoader(environ={"EEGROB_WORKERS": "4", "HOME": "/root"}).load()
    assert config == ConfigLoader(environ={}).load()


def test_the_hash_tracks_every_field():
    loader = ConfigLoader(environ={})
    base = config_hash(loader.load())
    assert base == config_hash(loader.load())
    assert len(base) == 64
    assert config_hash(loader.load(overrides=["training.epochs=199"])) != base
    assert config_hash(loader.load(overrides=["analysis.alpha=0.01"])) != base


def test_unknown_keys_name_their_path():
    with pytest.raises(ConfigurationError) as excinfo:
        ConfigLoader(environ={}).load(overrides=["training.epochz=3"])
    assert excinfo.value.key_path == "training.epochz"


def test_out_of_range_values_are_rejected():
    with pytest.raises(ConfigurationError) as excinfo:
        ConfigLoader(environ={}).load(overrides=["training.learning_rate=-1.0"])
    assert "training.learning_rate" in str(excinfo.value)


def test_zero_learning_rate_is_allowed():
    assert ConfigLoader(environ={}).load(overrides=["training.learning_rate=0.0"]).training.learning_rate == 0.0


def test_averaging_epsilons_must_stay_on_the_grid():
    with pytest.raises(ConfigurationError):
        ConfigLoader(environ={}).load(overrides=["attacks.pgd_l2.epsilons=[0.1, 0.2]"])
    with pytest.raises(ConfigurationError):
        ConfigLoader(environ={}).load(overrides=["evaluation.avg_gain_whitelist={}"])


def test_disabled_attacks_skip_the_grid_check():
    config = ConfigLoader(environ={}).load(
        overrides=["attacks.pgd_l2.enabled=false", "attacks.pgd_l2.epsilons=[0.1]"]
    )
    assert [t.value for t in config.attacks.enabled_tags()] == ["pgd_linf", "cw_l2"]


def test_recordings_source_needs_its_paths():
    with pytest.raises(ConfigurationError):
        ConfigLoader(environ={}).load(overrides=["data.source='recordings'"])


def test_missing_and_malformed_files(tmp_path):
    loader = ConfigLoader(environ={})
    with pytest.raises(ResourceNotFoundError):
        loader.load(tmp_path / "absent.toml")
    with pytest.raises(ConfigurationError):
        loader.load(write(tmp_path / "bad.toml", "[training\nepochs = 3\n"))


def test_shipped_synthetic_config_is_valid():
    config = ConfigLoader(environ={}).load(REPO_ROOT / "configs" / "synthetic.toml")
    assert config.data.source == "synthetic"
    assert config.backbone.kind.value == "toy_cnn"


def test_smoke_config_loads(smoke_config):
    assert smoke_config.grid.archs == ["CNN_Bk4", "CNN(avg)_Bk34", "RNN(LSTM)_Bk2"]
    lows, highs = smoke_config.data.pixel_bounds
    assert len(lows) == len(highs) == 3
    assert all(low < 0 < high for low, high in zip(lows, highs))


def test_pixel_bounds_are_per_channel():
    config = ExperimentConfig()
    lows, highs = config.data.pixel_bounds
    assert lows[2] == pytest.approx((0.0 - 0.406) / 0.225)
    assert highs[0] == pytest.approx((1.0 - 0.485) / 0.229)
    assert lows[2] != pytest.approx(min(lows[:2]))
    cfg = config.attacks.pgd_linf.to_pgd_config(Norm.LINF, config.data.pixel_bounds)
    assert cfg.pixel_bounds == (lows, highs)


def test_runtime_settings_resolve_the_result_root(monkeypatch, tmp_path):
    monkeypatch.setenv("EEGROB_RESULT_ROOT", str(tmp_path / "env-root"))
    monkeypatch.setenv("EEGROB_WORKERS", "3")
    settings = ToolkitSettings()
    assert settings.workers == 3
    assert settings.resolved_result_root() == tmp_path / "env-root"
    assert settings.resolved_result_root(str(tmp_path / "cli")) == tmp_path / "cli"
