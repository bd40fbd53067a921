"""Ensure the preset experiments keep their expected structure."""

from __future__ import annotations

import dataclasses
import json

import pytest

from homoflow.config import (  # pylint: disable=import-error
    PRESET_EXPERIMENTS,
    DataConfig,
    ExperimentConfig,
    ModelConfig,
    VerificationConfig,
    get_experiment_configs,
    get_preset,
    load_config,
    save_config,
)
from homoflow.errors import ConfigError  # pylint: disable=import-error
from homoflow.reporting import dumps_json  # pylint: disable=import-error


EXPECTED_PRESETS = {
    "planar-squared-relu": {"kind": "squared-relu", "loss": "exp", "groups": {"core", "two-homo"}},
    "planar-squared-relu-logistic": {"kind": "squared-relu", "loss": "logistic", "groups": {"core"}},
    "planar-covering": {"kind": "squared-relu", "loss": "exp", "groups": {"two-homo"}},
    "planar-ntk": {"kind": "ntk-frozen", "loss": "exp", "groups": {"baseline"}},
    "deep-linear-depth3": {"kind": "deep-linear", "loss": "exp", "groups": {"core", "deep-linear"}},
    "relu-mlp-pooled": {"kind": "relu-mlp", "loss": "exp", "groups": {"extended"}},
}


@pytest.mark.parametrize("name", sorted(EXPECTED_PRESETS))
def test_preset_present(name: str) -> None:
    config = get_preset(name)
    assert config.model.kind == EXPECTED_PRESETS[name]["kind"]
    assert config.loss == EXPECTED_PRESETS[name]["loss"]
    assert set(config.groups) == EXPECTED_PRESETS[name]["groups"]
    assert config.output_dir.endswith(name)


def test_preset_names_are_unique() -> None:
    names = [config.name for config in PRESET_EXPERIMENTS]
    assert len(names) == len(set(names))
    assert set(names) == set(EXPECTED_PRESETS)


def test_get_experiment_configs_respects_groups() -> None:
    core = {config.name for config in get_experiment_configs(["core"])}
    assert core == {"planar-squared-relu", "planar-squared-relu-logistic", "deep-linear-depth3"}

    two_homo = {config.name for config in get_experiment_configs(["two-homo"])}
    assert two_homo == {"planar-squared-relu", "planar-covering"}

    assert len(get_experiment_configs([])) == len(PRESET_EXPERIMENTS)
    assert get_experiment_configs(["nothing-here"]) == []


def test_unknown_preset() -> None:
    with pytest.raises(ConfigError):
        get_preset("does-not-exist")


@pytest.mark.parametrize("name", sorted(EXPECTED_PRESETS))
def test_config_survives_json(name: str) -> None:
    config = get_preset(name)
    restored = ExperimentConfig.from_mapping(json.loads(dumps_json(config.to_dict())))
    assert restored == config


def test_covering_preset_stays_in_the_plane() -> None:
    assert get_preset("planar-covering").data.append_bias is False
    deep = get_preset("deep-linear-depth3")
    assert deep.data.generator == "planar-linear-labels"
    assert deep.verification.kind == "deep-linear"
    assert get_preset("planar-covering").data.generator == "planar-circle-labels"


def test_presets_take_small_steps_from_small_inits() -> None:
    for name in ("planar-squared-relu", "planar-squared-relu-logistic", "planar-covering", "planar-ntk"):
        config = get_preset(name)
        assert config.model.init_scale == 0.1
        assert config.flow.base_step <= 0.01
        assert config.flow.clamp <= 0.02
    deep = get_preset("deep-linear-depth3")
    assert deep.model.init_scale == 0.01
    assert deep.flow.base_step <= 0.002
    assert deep.flow.clamp <= 0.002


@pytest.mark.parametrize(
    "document",
    [
        {"description": "no name"},
        {"name": "x", "surprise": 1},
        {"name": "x", "loss": "hinge"},
        {"name": "x", "model": {"kind": "transformer"}},
        {"name": "x", "model": {"kind": "relu-mlp"}},
        {"name": "x", "model": {"depth": 3}},
        {"name": "x", "flow": {"base_step": -1.0}},
        {"name": "x", "verification": {"kind": "three-homo"}},
    ],
)
def test_invalid_documents_are_config_errors(document) -> None:
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(document)


def test_json_numbers_are_coerced() -> None:
    config = ExperimentConfig.from_mapping(
        {"name": "x", "flow": {"target_accuracy": 20, "max_steps": 100.0}, "model": {"hidden": [4, 4], "kind": "deep-linear"}}
    )
    assert isinstance(config.flow.target_accuracy, float)
    assert config.flow.max_steps == 100
    assert config.model.hidden == (4, 4)


def test_save_and_load(tmp_path) -> None:
    config = ExperimentConfig(
        name="roundtrip",
        model=ModelConfig(width=8),
        data=DataConfig(n_raw=30),
        verification=VerificationConfig(kind="two-homo", tol=0.05),
        output_dir=str(tmp_path / "out"),
    )
    path = save_config(tmp_path / "nested" / "config.json", config)
    assert load_config(path) == config


def test_load_config_reports_bad_files(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_with_seed_changes_only_seed_and_output() -> None:
    base = get_preset("planar-squared-relu")
    seeded = base.with_seed(9, "runs/seed-9")
    assert seeded.seed == 9
    assert seeded.output_dir == "runs/seed-9"
    assert dataclasses.replace(seeded, flow=base.flow, output_dir=base.output_dir) == base
