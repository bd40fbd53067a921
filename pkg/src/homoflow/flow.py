"""Discrete gradient flow with loss-normalized, clamped steps.

Each step moves W by -min(eta0 / L(W), clamp / ||grad L||) * grad L.  The
product eta0 / L * grad L is formed as eta0 * (grad L / L) with the weights
l'(p_i) / L taken from the log domain, so the scheme keeps running after
L(W) underflows.  Records are emitted on a grid of accuracy tau = ln(n / L).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .data import Dataset
from .errors import ConfigError, InitNotSeparating, StalledFlow, WarmupFailed, ZeroNorm
from .losses import LossKind, ell, log_total_loss, scaled_loss_weights
from .metrics import MetricsRecord, record_metrics
from .models import PredictorSpec, margin_jacobian, margins
from .params import ParamVec, norm

logger = logging.getLogger(__name__)

WARMUP_TARGET = 0.99
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class FlowConfig:
    """Step-size, stopping and checkpoint settings for one run."""

    base_step: float = 0.05
    clamp: float = 0.1
    target_accuracy: float = 60.0
    checkpoint_spacing: float = 0.5
    max_steps: int = 5_000_000
    seed: int = 0
    warmup_step: float = 0.1
    warmup_max_steps: int = 100_000
    max_halvings: int = 30
    extended_precision: bool = False
    extended_threshold: float = 50.0

    def __post_init__(self) -> None:
        for name in ("base_step", "clamp", "checkpoint_spacing", "warmup_step"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not math.isfinite(self.target_accuracy):
            raise ConfigError("target_accuracy must be finite")
        if self.max_steps < 0 or self.warmup_max_steps < 0 or self.max_halvings < 0:
            raise ConfigError("step limits must be nonnegative")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "FlowConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown flow settings: {sorted(unknown)}")
        return cls(**dict(data))


@dataclass(frozen=True, eq=False)
class FlowState:
    """Current iterate plus accuracy and path-length bookkeeping."""

    W: ParamVec
    step: int
    loss_log: float
    tau: float
    zeta: float
    last_dir: np.ndarray
    log_flow_time: float = -math.inf


@dataclass(eq=False)
class Trajectory:
    records: List[MetricsRecord] = field(default_factory=list)
    final: Optional[FlowState] = None

    def taus(self) -> np.ndarray:
        return np.array([record.tau for record in self.records])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records])

    def nearest(self, tau: float) -> MetricsRecord:
        """Record whose accuracy is closest to ``tau``."""
        index = int(np.argmin(np.abs(self.taus() - tau)))
        return self.records[index]


def loss_gradient(
    spec: PredictorSpec,
    dataset: Dataset,
    kind: LossKind,
    W: ParamVec,
    extended: bool = False,
) -> Tuple[np.ndarray, float, np.ndarray]:
    """Margins, ln L(W) and the loss-normalized gradient grad L / L."""
    p, jac = margin_jacobian(spec, W, dataset.X, dataset.y)
    log_loss = log_total_loss(kind, p, extended=extended)
    weights = scaled_loss_weights(kind, p, log_loss)
    return p, log_loss, weights @ jac


def check_init(kind: LossKind, spec: PredictorSpec, dataset: Dataset, W: ParamVec) -> bool:
    """True iff L(W) < l(0)."""
    p = margins(spec, W, dataset.X, dataset.y)
    return log_total_loss(kind, p) < math.log(ell(kind, 0.0))


def initial_state(spec: PredictorSpec, dataset: Dataset, kind: LossKind, W: ParamVec) -> FlowState:
    p = margins(spec, W, dataset.X, dataset.y)
    loss_log = log_total_loss(kind, p)
    return FlowState(
        W=W,
        step=0,
        loss_log=loss_log,
        tau=math.log(dataset.n) - loss_log,
        zeta=0.0,
        last_dir=W.unit(),
    )


@dataclass(frozen=True, eq=False)
class WarmupResult:
    """Separating iterate plus the first iterate with every margin positive."""

    W: ParamVec
    first_separating: ParamVec
    steps: int


def warmup_trace(
    spec: PredictorSpec,
    dataset: Dataset,
    W_init: ParamVec,
    kind: LossKind,
    *,
    step_size: float = 0.1,
    max_steps: int = 100_000,
    clamp: float = 0.1,
    max_halvings: int = 30,
) -> WarmupResult:
    """Clamped, loss-normalized descent until L(W) < 0.99 l(0).

    The update is -min(step_size, clamp / ||g||) * g with g = grad L / L, so
    badly misclassified points cannot blow the parameters up.
    """
    kind = LossKind(kind)
    target = math.log(WARMUP_TARGET * ell(kind, 0.0))
    W = W_init
    first_separating: Optional[ParamVec] = None
    for iteration in range(max_steps + 1):
        p, log_loss, scaled_grad = loss_gradient(spec, dataset, kind, W)
        if first_separating is None and np.all(p > 0.0):
            first_separating = W
        if log_loss < target:
            logger.info("Warmup reached L(W) < %.2f l(0) after %d steps", WARMUP_TARGET, iteration)
            first = first_separating if first_separating is not None else W
            return WarmupResult(W=W, first_separating=first, steps=iteration)
        if iteration == max_steps:
            break
        grad_norm = norm(scaled_grad)
        if grad_norm == 0.0:
            raise WarmupFailed(f"warmup gradient vanished at step {iteration} with ln L = {log_loss:.6g}")
        scale = min(step_size, clamp / grad_norm)
        ceiling = log_loss + math.log1p(MONOTONE_SLACK)
        for _ in range(max_halvings + 1):
            candidate = W.data - scale * scaled_grad
            if log_total_loss(kind, margins(spec, candidate, dataset.X, dataset.y)) <= ceiling:
                break
            scale *= 0.5
        else:
            raise WarmupFailed(f"no descent step after {max_halvings} halvings at warmup step {iteration}")
        W = W.with_data(candidate)
        if iteration % 1000 == 0:
            logger.debug("Warmup step %d: ln L = %.6g, min margin %.4g", iteration, log_loss, float(np.min(p)))
    raise WarmupFailed(
        f"loss still above {WARMUP_TARGET} l(0) after {max_steps} warmup steps "
        "(non-separable data or a degenerate initialization)"
    )


def warmup(
    spec: PredictorSpec,
    dataset: Dataset,
    W_init: ParamVec,
    kind: LossKind,
    **options: Any,
) -> ParamVec:
    """First iterate with L(W) < 0.99 l(0); see ``warmup_trace``."""
    return warmup_trace(spec, dataset, W_init, kind, **options).W


def step(
    state: FlowState,
    spec: PredictorSpec,
    dataset: Dataset,
    kind: LossKind,
    config: FlowConfig,
) -> FlowState:
    """One loss-normalized step, halved until the loss does not increase."""
    if norm(state.W) == 0.0:
        raise ZeroNorm("the flow needs ||W|| > 0")
    extended = config.extended_precision and state.tau > config.extended_threshold
    _, log_loss, scaled_grad = loss_gradient(spec, dataset, kind, state.W, extended=extended)
    grad_norm = norm(scaled_grad)
    if grad_norm == 0.0:
        return dataclasses.replace(state, step=state.step + 1, loss_log=log_loss)

    # eta_eff * L(W); the clamp caps the update norm at config.clamp.
    scale = min(config.base_step, config.clamp / grad_norm)
    ceiling = log_loss + math.log1p(MONOTONE_SLACK)
    for halving in range(config.max_halvings + 1):
        candidate = state.W.data - scale * scaled_grad
        new_log = log_total_loss(kind, margins(spec, candidate, dataset.X, dataset.y), extended=extended)
        if new_log <= ceiling:
            break
        logger.debug("Step %d: loss rose (halving %d), retrying with half the step", state.step, halving + 1)
        scale *= 0.5
    else:
        logger.error(
            "Flow stalled at step %d (tau=%.4f, ||W||=%.6g) after %d halvings",
            state.step, state.tau, norm(state.W), config.max_halvings,
        )
        raise StalledFlow(
            f"no non-increasing step after {config.max_halvings} halvings at step {state.step}",
            state=state,
        )

    W_next = state.W.with_data(candidate)
    direction = W_next.unit()
    return FlowState(
        W=W_next,
        step=state.step + 1,
        loss_log=new_log,
        tau=math.log(dataset.n) - new_log,
        zeta=state.zeta + norm(direction - state.last_dir),
        last_dir=direction,
        log_flow_time=float(np.logaddexp(state.log_flow_time, math.log(scale) - log_loss)),
    )


def run(
    spec: PredictorSpec,
    dataset: Dataset,
    kind: LossKind,
    config: FlowConfig,
    W0: ParamVec,
    record_hook: Optional[Callable[[MetricsRecord], None]] = None,
) -> Trajectory:
    """Iterate ``step`` until tau >= target_accuracy or max_steps, recording every spacing."""
    kind = LossKind(kind)
    if not check_init(kind, spec, dataset, W0):
        raise InitNotSeparating("run() needs L(W0) < l(0); call warmup() first")

    def record(state: FlowState) -> MetricsRecord:
        extended = config.extended_precision and state.tau > config.extended_threshold
        return record_metrics(state, spec, dataset, kind, extended=extended)

    state = initial_state(spec, dataset, kind, W0)
    trajectory = Trajectory(records=[record(state)])
    if record_hook:
        record_hook(trajectory.records[-1])

    spacing = config.checkpoint_spacing
    next_mark = (math.floor(state.tau / spacing) + 1) * spacing
    while state.tau < config.target_accuracy and state.step < config.max_steps:
        state = step(state, spec, dataset, kind, config)
        if state.tau >= next_mark:
            trajectory.records.append(record(state))
            if record_hook:
                record_hook(trajectory.records[-1])
            next_mark = (math.floor(state.tau / spacing) + 1) * spacing

    last = trajectory.records[-1]
    if last.step != state.step and state.tau > last.tau:
        trajectory.records.append(record(state))
        if record_hook:
            record_hook(trajectory.records[-1])

    trajectory.final = state
    logger.info(
        "Run finished: %d steps, tau=%.3f, %d records, zeta=%.6g",
        state.step, state.tau, len(trajectory.records), state.zeta,
    )
    return trajectory
