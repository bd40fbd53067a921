"""Loss-normalized gradient flow: steps, checkpoints, warmup and failure modes."""

from __future__ import annotations

import math

import numpy as np
import pytest

import homoflow.flow as flow_module  # pylint: disable=import-error
from homoflow.data import Dataset  # pylint: disable=import-error
from homoflow.errors import ConfigError, InitNotSeparating, StalledFlow, WarmupFailed  # pylint: disable=import-error
from homoflow.flow import FlowConfig, check_init, initial_state, run, step, warmup, warmup_trace  # pylint: disable=import-error
from homoflow.losses import LossKind  # pylint: disable=import-error
from homoflow.models import deep_linear_spec, margins, squared_relu_spec  # pylint: disable=import-error


@pytest.fixture
def symmetric_pair() -> Dataset:
    return Dataset.from_arrays([[1.0, 0.0], [-1.0, 0.0]], [1, -1])


@pytest.fixture
def two_node():
    spec = squared_relu_spec(2, 2)
    return spec, spec.wrap([-1.0, 0.2, 1.0, 0.3])


def test_flow_config_validation() -> None:
    with pytest.raises(ConfigError):
        FlowConfig(base_step=0.0)
    with pytest.raises(ConfigError):
        FlowConfig(target_accuracy=float("nan"))
    with pytest.raises(ConfigError):
        FlowConfig.from_mapping({"base_step": 0.1, "learning_rate": 0.2})
    assert FlowConfig.from_mapping({"clamp": 0.2}).clamp == 0.2
    assert FlowConfig().to_dict()["checkpoint_spacing"] == 0.5


def test_run_refuses_non_separating_init(symmetric_pair) -> None:
    spec = squared_relu_spec(2, 2)
    W0 = spec.wrap([1.0, 0.0, -1.0, 0.0])
    assert not check_init(LossKind.EXP, spec, symmetric_pair, W0)
    with pytest.raises(InitNotSeparating):
        run(spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=5.0), W0)


def test_warmup_reaches_separating_iterate(symmetric_pair) -> None:
    spec = deep_linear_spec((2, 1))
    W = warmup(spec, symmetric_pair, spec.wrap([-1.0, 0.0]), LossKind.EXP, step_size=0.1, max_steps=1000)
    assert check_init(LossKind.EXP, spec, symmetric_pair, W)
    assert W.data[0] > 0.0


def test_warmup_survives_large_misclassifying_nodes(symmetric_pair) -> None:
    spec = squared_relu_spec(2, 4)
    # Nodes 2 and 3 push both examples to a margin near -400.
    W0 = spec.wrap([-0.5, 0.0, 0.5, 0.0, 20.0, 0.0, -20.0, 0.0])
    assert np.all(margins(spec, W0, symmetric_pair.X, symmetric_pair.y) < -399.0)

    W = warmup(spec, symmetric_pair, W0, LossKind.EXP)
    assert np.all(np.isfinite(W.data))
    assert check_init(LossKind.EXP, spec, symmetric_pair, W)
    # The misclassifying nodes shrink toward zero without changing side.
    assert 0.0 <= W.data[4] < 20.0
    assert -20.0 < W.data[6] <= 0.0


def test_warmup_trace_keeps_the_first_correct_iterate(symmetric_pair) -> None:
    spec = deep_linear_spec((2, 1))
    result = warmup_trace(spec, symmetric_pair, spec.wrap([-1.0, 0.0]), LossKind.EXP, step_size=0.1, max_steps=1000)
    early = margins(spec, result.first_separating, symmetric_pair.X, symmetric_pair.y)
    assert np.all(early > 0.0)
    assert result.first_separating.data[0] <= result.W.data[0]
    assert result.steps > 0


def test_warmup_fails_on_conflicting_labels() -> None:
    conflicting = Dataset.from_arrays([[1.0, 0.0], [1.0, 0.0]], [1, -1])
    spec = deep_linear_spec((2, 1))
    with pytest.raises(WarmupFailed):
        warmup(spec, conflicting, spec.wrap([0.5, 0.0]), LossKind.EXP, max_steps=20)


def test_run_on_symmetric_pair(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    trajectory = run(spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=30.0), W0)
    records = trajectory.records

    assert records[0].step == 0
    assert records[0].tau == pytest.approx(1.0, rel=1e-12)
    assert trajectory.final.tau >= 30.0
    assert records[-1].step == trajectory.final.step

    log_loss = trajectory.series("log_loss")
    assert np.all(np.diff(log_loss) <= 1e-12)
    assert np.all(np.diff(trajectory.series("norm_w")) > 0.0)
    assert np.all(np.diff(trajectory.series("zeta")) >= 0.0)
    assert np.allclose(trajectory.taus(), math.log(2.0) - log_loss, rtol=0.0, atol=1e-12)

    # One record per crossed multiple of the spacing.
    marks = np.floor(trajectory.taus() / 0.5)
    assert np.all(np.diff(marks) > 0)


def test_symmetric_pair_margins_stay_balanced(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    trajectory = run(spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=20.0), W0)
    last = trajectory.records[-1]
    assert last.margins_norm[0] == pytest.approx(last.margins_norm[1], rel=1e-9)
    assert np.allclose(last.duals, [0.5, 0.5], atol=1e-9)


def test_target_below_initial_accuracy_records_once(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    trajectory = run(spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=0.0), W0)
    assert len(trajectory.records) == 1
    assert trajectory.final.step == 0


def test_record_hook_sees_every_record(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    seen = []
    trajectory = run(
        spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=8.0), W0, record_hook=seen.append
    )
    assert seen == trajectory.records


def test_max_steps_stops_the_run(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    trajectory = run(spec, symmetric_pair, LossKind.EXP, FlowConfig(target_accuracy=30.0, max_steps=3), W0)
    assert trajectory.final.step == 3
    assert trajectory.records[-1].step == 3


def test_runs_are_deterministic(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    config = FlowConfig(target_accuracy=12.0)
    first = run(spec, symmetric_pair, LossKind.EXP, config, W0)
    second = run(spec, symmetric_pair, LossKind.EXP, config, W0)
    assert np.array_equal(first.final.W.data, second.final.W.data)
    assert np.array_equal(first.series("alpha_norm"), second.series("alpha_norm"))


def test_logistic_run_decreases_loss(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    trajectory = run(spec, symmetric_pair, LossKind.LOGISTIC, FlowConfig(target_accuracy=15.0), W0)
    assert trajectory.final.tau >= 15.0
    assert np.all(np.diff(trajectory.series("log_loss")) <= 1e-12)


def test_flow_time_accumulates(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    config = FlowConfig()
    state = initial_state(spec, symmetric_pair, LossKind.EXP, W0)
    assert state.log_flow_time == -math.inf
    times = []
    for _ in range(10):
        state = step(state, spec, symmetric_pair, LossKind.EXP, config)
        times.append(state.log_flow_time)
    assert np.all(np.isfinite(times))
    assert np.all(np.diff(times) > 0.0)


def test_clamp_bounds_the_update(symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    config = FlowConfig(clamp=0.01)
    state = initial_state(spec, symmetric_pair, LossKind.EXP, W0)
    moved = step(state, spec, symmetric_pair, LossKind.EXP, config)
    assert np.linalg.norm(moved.W.data - W0.data) <= 0.01 + 1e-15


def test_stalled_flow_carries_last_state(monkeypatch, symmetric_pair, two_node) -> None:
    spec, W0 = two_node
    state = initial_state(spec, symmetric_pair, LossKind.EXP, W0)
    monkeypatch.setattr(flow_module, "margins", lambda *args, **kwargs: -1e3 * np.ones(2))
    with pytest.raises(StalledFlow) as excinfo:
        step(state, spec, symmetric_pair, LossKind.EXP, FlowConfig(max_halvings=3))
    assert excinfo.value.state is state
