"""Command-line surface: exit codes, output files and reproducibility."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from homoflow.cli_utils import is_debug_mode, is_extended_precision  # pylint: disable=import-error
from homoflow.config import DataConfig, ExperimentConfig, ModelConfig, VerificationConfig, save_config  # pylint: disable=import-error
from homoflow.data import Dataset  # pylint: disable=import-error
from homoflow.flow import FlowConfig  # pylint: disable=import-error
from homoflow.harness import EXIT_ERROR, EXIT_VERIFY_FAILED, execute, main, sweep_configs  # pylint: disable=import-error
from homoflow.models import margins  # pylint: disable=import-error
from homoflow.reporting import GRID_COLUMNS, TRAJECTORY_COLUMNS, write_dataset  # pylint: disable=import-error


def _rows(path: Path):
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def pair_file(tmp_path) -> Path:
    return write_dataset(tmp_path / "pair.json", Dataset.from_arrays([[1.0, 0.0], [-1.0, 0.0]], [1, -1]))


def _linear_config(tmp_path: Path, name: str = "linear", **flow) -> Path:
    config = ExperimentConfig(
        name=name,
        model=ModelConfig(kind="deep-linear"),
        data=DataConfig(generator="planar-linear-labels", seed=7, n_raw=30, margin_floor=0.2, append_bias=False),
        flow=FlowConfig(seed=1, **{"target_accuracy": 10.0, **flow}),
        output_dir=str(tmp_path / name),
    )
    return save_config(tmp_path / f"{name}.json", config)


def test_gen_data_is_byte_identical(tmp_path) -> None:
    for name in ("a.json", "b.json"):
        assert main(["gen-data", "--seed", "42", "--n", "60", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    document = json.loads((tmp_path / "a.json").read_text(encoding="utf-8"))
    assert document["meta"]["seed"] == 42


def test_gen_data_without_bias(tmp_path) -> None:
    out = tmp_path / "plane.json"
    assert main(["gen-data", "--n", "40", "--no-bias", "--generator", "planar-linear-labels", "--out", str(out)]) == 0
    document = json.loads(out.read_text(encoding="utf-8"))
    assert len(document["examples"][0]["x"]) == 2


def test_run_writes_reproducible_outputs(tmp_path) -> None:
    assert main(["run", "--config", str(_linear_config(tmp_path, "first"))]) == 0
    assert main(["run", "--config", str(_linear_config(tmp_path, "second"))]) == 0

    first, second = tmp_path / "first", tmp_path / "second"
    for name in ("trajectory.csv", "margins.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    rows = _rows(first / "trajectory.csv")
    assert tuple(rows[0]) == TRAJECTORY_COLUMNS
    assert float(rows[-1][1]) >= 10.0
    assert (first / "config.json").exists()


def test_zero_target_writes_one_row(tmp_path) -> None:
    assert main(["run", "--config", str(_linear_config(tmp_path, "zero", target_accuracy=0.0))]) == 0
    assert len(_rows(tmp_path / "zero" / "trajectory.csv")) == 2


def test_grid_and_ntk_comparison(tmp_path, pair_file) -> None:
    config = ExperimentConfig(
        name="grid",
        model=ModelConfig(width=16),
        data=DataConfig(source=str(pair_file)),
        flow=FlowConfig(target_accuracy=5.0, seed=3),
        output_dir=str(tmp_path / "grid"),
    )
    path = save_config(tmp_path / "grid.json", config)
    assert main(["grid", "--config", str(path), "--resolution", "2", "--compare-ntk"]) == 0
    for name in ("grid.csv", "grid_early.csv", "grid_ntk.csv"):
        rows = _rows(tmp_path / "grid" / name)
        assert tuple(rows[0]) == GRID_COLUMNS
        assert len(rows) == 5
        assert {(row[0], row[1]) for row in rows[1:]} == {("-1", "-1"), ("1", "-1"), ("-1", "1"), ("1", "1")}


def test_execute_keeps_the_first_correct_iterate(tmp_path, pair_file) -> None:
    config = ExperimentConfig(
        name="early",
        model=ModelConfig(width=16),
        data=DataConfig(source=str(pair_file)),
        flow=FlowConfig(target_accuracy=5.0, seed=3),
        output_dir=str(tmp_path / "early"),
    )
    result = execute(config)
    early = result.W_separating
    assert early is not None
    assert np.all(margins(result.spec, early, result.dataset.X, result.dataset.y) > 0.0)


def _deep_linear_verify_config(tmp_path: Path, pair_file: Path, untrained: bool) -> Path:
    config = ExperimentConfig(
        name="verify-deep",
        model=ModelConfig(kind="deep-linear", hidden=(2,), init_scale=0.01),
        data=DataConfig(source=str(pair_file)),
        flow=FlowConfig(target_accuracy=20.0),
        verification=VerificationConfig(kind="deep-linear", untrained_control=untrained),
        output_dir=str(tmp_path / ("control" if untrained else "trained")),
    )
    return save_config(tmp_path / f"verify-{untrained}.json", config)


def test_verify_deep_linear_passes(tmp_path, pair_file, capsys) -> None:
    path = _deep_linear_verify_config(tmp_path, pair_file, untrained=False)
    assert main(["verify", "deep-linear", "--config", str(path)]) == 0
    report = json.loads((tmp_path / "trained" / "verify.json").read_text(encoding="utf-8"))
    assert report["product_angle"]["pass"] is True
    assert "All checks passed" in capsys.readouterr().out


def test_verify_untrained_control_fails(tmp_path, pair_file) -> None:
    path = _deep_linear_verify_config(tmp_path, pair_file, untrained=True)
    assert main(["verify", "deep-linear", "--config", str(path)]) == EXIT_VERIFY_FAILED
    report = json.loads((tmp_path / "control" / "verify.json").read_text(encoding="utf-8"))
    assert not all(check["pass"] for check in report.values())


def test_missing_config_is_an_error(tmp_path, capsys) -> None:
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_ERROR
    assert "ConfigError" in capsys.readouterr().err


def test_grid_needs_planar_inputs(tmp_path) -> None:
    cube = write_dataset(tmp_path / "cube.json", Dataset.from_arrays([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], [1, -1]))
    config = ExperimentConfig(
        name="cube",
        model=ModelConfig(width=4),
        data=DataConfig(source=str(cube)),
        verification=VerificationConfig(untrained_control=True),
        output_dir=str(tmp_path / "cube"),
    )
    path = save_config(tmp_path / "cube-config.json", config)
    assert main(["grid", "--config", str(path), "--resolution", "3"]) == EXIT_ERROR


def test_presets_listing(capsys) -> None:
    assert main(["presets", "--group", "deep-linear"]) == 0
    out = capsys.readouterr().out
    assert "deep-linear-depth3" in out
    assert "planar-ntk" not in out


def test_init_config_writes_a_loadable_preset(tmp_path) -> None:
    out = tmp_path / "preset.json"
    assert main(["init-config", "--preset", "planar-covering", "--out", str(out)]) == 0
    assert json.loads(out.read_text(encoding="utf-8"))["data"]["append_bias"] is False
    assert main(["init-config", "--preset", "nope", "--out", str(out)]) == EXIT_ERROR


def test_sweep_writes_one_directory_per_seed(tmp_path) -> None:
    path = _linear_config(tmp_path, "sweep", target_accuracy=4.0)
    assert main(["sweep", "--config", str(path), "--seeds", "1", "2"]) == 0
    for seed in (1, 2):
        assert (tmp_path / "sweep" / f"seed-{seed}" / "trajectory.csv").exists()


def test_sweep_configs_only_change_seed_and_directory(tmp_path) -> None:
    base = ExperimentConfig(name="base", output_dir=str(tmp_path))
    configs = sweep_configs(base, [3, 4])
    assert [config.seed for config in configs] == [3, 4]
    assert configs[1].output_dir == str(tmp_path / "seed-4")
    assert configs[0].model == base.model


def test_cli_flags_and_environment() -> None:
    assert is_debug_mode(["homoflow", "--debug"], {})
    assert is_debug_mode([], {"HOMOFLOW_DEBUG": "Yes"})
    assert not is_debug_mode([], {"HOMOFLOW_DEBUG": "0"})
    assert is_extended_precision({"HOMOFLOW_PRECISION": "extended"})
    assert not is_extended_precision({})
