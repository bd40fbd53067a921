"""Diagnostics computed from a flow state.

Angles, potentials and normalized margins are all scale invariant; rates are
reported in flow time together with ``tau_rate`` = d tau / dt, so dividing a
rate by ``tau_rate`` gives its derivative in accuracy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset
from .errors import ShapeMismatch, UnsupportedDimension, ZeroNorm, ZeroVector
from .losses import (
    LossKind,
    alpha_gradient_factor,
    beta as beta_value,
    ell_prime,
    scaled_loss_weights,
    smoothed_margin,
    snapshot,
)
from .models import PredictorKind, PredictorSpec, margin_jacobian, margins as batch_margins
from .params import ArrayLike, ParamVec, Segment, decompose, inner, norm, partition_shares

if TYPE_CHECKING:  # pragma: no cover
    from .flow import FlowState

logger = logging.getLogger(__name__)

ZERO_ROW_THRESHOLD = 1e-14
DEFAULT_COVER_GRID = 4096
SCALE_CHECK_TOLERANCE = 1e-10


@dataclass(frozen=True, slots=True)
class SegmentAlignment:
    name: str
    norm_share: float
    grad_share: float
    cosine: float


@dataclass(frozen=True, eq=False)
class MetricsRecord:
    """Everything recorded at one accuracy checkpoint."""

    step: int
    tau: float
    log_loss: float
    norm_w: float
    alpha: float
    alpha_norm: float
    beta: float
    zeta: float
    theta: float
    j_potential: float
    euler_residual: float
    rate_alpha: float
    rate_zeta: float
    tau_rate: float
    degree: float
    margins_norm: np.ndarray
    duals: np.ndarray
    shares: np.ndarray
    node_dirs: np.ndarray
    alignment: Tuple[SegmentAlignment, ...] = ()

    @property
    def asymptotic_euler(self) -> float:
        """<grad alpha, W> / ||W||^L, equal to L beta / ||W||^L."""
        return self.degree * self.beta / self.norm_w ** self.degree


@dataclass(frozen=True, slots=True)
class CoverReport:
    epsilon_cover: float
    epsilon_drift: Optional[float]
    grid_slack: float


def _nonzero_norm(W: Union[ParamVec, ArrayLike], what: str = "||W||") -> float:
    length = norm(W)
    if length == 0.0:
        raise ZeroNorm(f"{what} must be positive")
    return length


def alignment_angle(W: Union[ParamVec, ArrayLike], g: ArrayLike) -> float:
    """Angle between W and -g, in [0, pi]."""
    w_norm, g_norm = norm(W), norm(g)
    if w_norm == 0.0 or g_norm == 0.0:
        raise ZeroVector("alignment angle needs nonzero W and gradient")
    cosine = -inner(W, g) / (w_norm * g_norm)
    return math.acos(min(1.0, max(-1.0, cosine)))


def margin_distribution(margins: ArrayLike, norm_W: float, L: float) -> np.ndarray:
    """p_i / ||W||^L."""
    if not norm_W > 0.0:
        raise ZeroNorm("normalized margins need ||W|| > 0")
    return np.asarray(margins, dtype=float) / norm_W ** L


def rate_identities(
    W: Union[ParamVec, ArrayLike],
    grad_L: ArrayLike,
    kind: LossKind,
    margins: ArrayLike,
    degree: float,
) -> Tuple[float, float]:
    """Right-hand sides of the flow-time rates of alpha-bar and zeta."""
    length = _nonzero_norm(W)
    p = np.asarray(margins, dtype=float)
    alpha = smoothed_margin(kind, p)
    beta = beta_value(kind, p)
    grad_alpha = np.asarray(grad_L, dtype=float) / ell_prime(kind, alpha)

    loss_split = decompose(grad_L, W)
    alpha_split = decompose(grad_alpha, W)
    radial_bar = degree * abs(beta - alpha) / length ** (degree + 1)
    spherical_bar = alpha_split.spherical_norm / length ** degree
    rate_alpha = radial_bar * loss_split.radial_norm + spherical_bar * loss_split.spherical_norm
    rate_zeta = loss_split.spherical_norm / length
    return rate_alpha, rate_zeta


def j_potential(W: Union[ParamVec, ArrayLike], grad_alpha: ArrayLike, L: float) -> float:
    """||grad alpha||^2 / ||W||^(2L - 2)."""
    length = _nonzero_norm(W)
    return norm(grad_alpha) ** 2 / length ** (2 * L - 2)


def asymptotic_euler(W: Union[ParamVec, ArrayLike], grad_alpha: ArrayLike, L: float) -> float:
    """<grad alpha, W> / ||W||^L."""
    length = _nonzero_norm(W)
    return inner(grad_alpha, W) / length ** L


def partition_alignment(
    W: ParamVec,
    grad_L: ArrayLike,
    partition: Optional[Sequence[Segment]] = None,
) -> List[SegmentAlignment]:
    """Per-segment norm share, gradient share and cosine of (U_j, -g_j)."""
    gradient = np.asarray(grad_L, dtype=float)
    w_norm = _nonzero_norm(W)
    g_norm = _nonzero_norm(gradient, "||grad L||")
    report: List[SegmentAlignment] = []
    for segment in partition if partition is not None else W.partition:
        block = W.data[segment.offset:segment.stop]
        g_block = gradient[segment.offset:segment.stop]
        block_norm, g_block_norm = norm(block), norm(g_block)
        if block_norm == 0.0 or g_block_norm == 0.0:
            cosine = 0.0
        else:
            cosine = -inner(block, g_block) / (block_norm * g_block_norm)
        report.append(
            SegmentAlignment(
                name=segment.name,
                norm_share=block_norm / w_norm,
                grad_share=g_block_norm / g_norm,
                cosine=cosine,
            )
        )
    return report


def node_directions(W: ParamVec, partition: Optional[Sequence[Segment]] = None) -> np.ndarray:
    """theta_j = w_j / ||w_j||, or the zero vector for (numerically) zero rows."""
    segments = list(partition if partition is not None else W.partition)
    lengths = {segment.length for segment in segments}
    if len(lengths) != 1:
        raise ShapeMismatch("node directions need equally sized per-node segments")
    rows = np.stack([W.data[s.offset:s.stop] for s in segments])
    threshold = ZERO_ROW_THRESHOLD * norm(W)
    row_norms = np.linalg.norm(rows, axis=1)
    safe = np.where(row_norms > threshold, row_norms, 1.0)
    return np.where((row_norms > threshold)[:, None], rows / safe[:, None], 0.0)


def _unit_circle(grid_size: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(grid_size) / grid_size
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _distance_to_group(grid: np.ndarray, group: np.ndarray) -> np.ndarray:
    if group.shape[0] == 0:
        return np.full(grid.shape[0], 2.0)
    gaps = grid[:, None, :] - group[None, :, :]
    return np.min(np.linalg.norm(gaps, axis=2), axis=1)


def covering_check(
    node_dirs: ArrayLike,
    signs: Sequence[int],
    grid_size: int = DEFAULT_COVER_GRID,
    final_dirs: Optional[ArrayLike] = None,
) -> CoverReport:
    """Covering epsilon of the positive and negative node directions on the circle.

    The grid maximum is exact up to the grid resolution, and 2 pi / N is
    added on top so the reported value bounds the true one.
    """
    dirs = np.atleast_2d(np.asarray(node_dirs, dtype=float))
    if dirs.shape[1] != 2:
        raise UnsupportedDimension(f"covering check runs on the circle (d=2), got d={dirs.shape[1]}")
    if grid_size < 8:
        raise ValueError(f"grid_size must be at least 8, got {grid_size}")
    sign_array = np.asarray(signs)
    if sign_array.shape[0] != dirs.shape[0]:
        raise ShapeMismatch("one sign per node direction is required")

    grid = _unit_circle(grid_size)
    positive = _distance_to_group(grid, dirs[sign_array > 0])
    negative = _distance_to_group(grid, dirs[sign_array < 0])
    slack = 2.0 * np.pi / grid_size
    cover = float(np.max(np.maximum(positive, negative))) + slack

    drift = None
    if final_dirs is not None:
        final = np.atleast_2d(np.asarray(final_dirs, dtype=float))
        if final.shape != dirs.shape:
            raise ShapeMismatch("final directions must match the node directions")
        drift = float(np.max(np.linalg.norm(dirs - final, axis=1)))
    return CoverReport(epsilon_cover=cover, epsilon_drift=drift, grid_slack=slack)


def _has_node_rows(spec: PredictorSpec) -> bool:
    return spec.kind in (PredictorKind.SQUARED_RELU, PredictorKind.NTK_FROZEN)


def _check_rescaled_margins(spec: PredictorSpec, W: ParamVec, dataset: Dataset, expected: np.ndarray) -> None:
    factor = 2.0
    length = norm(W) * factor
    rescaled = batch_margins(spec, W.data * factor, dataset.X, dataset.y) / length ** spec.degree
    drift = float(np.max(np.abs(rescaled - expected)))
    limit = SCALE_CHECK_TOLERANCE * max(1.0, float(np.max(np.abs(expected))))
    if drift > limit:
        logger.warning("Normalized margins moved by %.3g under W -> 2W", drift)


def record_metrics(
    state: "FlowState",
    spec: PredictorSpec,
    dataset: Dataset,
    kind: LossKind,
    extended: bool = False,
) -> MetricsRecord:
    """Build the checkpoint record for ``state``.

    ``extended`` evaluates ln L, alpha and alpha-bar with the long-double
    accumulator.
    """
    W = state.W
    L = spec.degree
    length = _nonzero_norm(W)
    p, jac = margin_jacobian(spec, W, dataset.X, dataset.y)
    snap = snapshot(kind, p, norm_W=length, degree=L, extended=extended)
    scaled_grad = scaled_loss_weights(kind, p, snap.loss_log) @ jac
    loss_value = math.exp(snap.loss_log)
    grad_L = loss_value * scaled_grad
    grad_alpha = alpha_gradient_factor(kind, snap.alpha, snap.loss_log) * scaled_grad

    scaled_norm = norm(scaled_grad)
    theta = alignment_angle(W, scaled_grad) if scaled_norm > 0.0 else math.pi / 2
    euler = asymptotic_euler(W, grad_alpha, L)
    rate_alpha, rate_zeta = rate_identities(W, grad_L, kind, p, degree=L)
    margins_norm = margin_distribution(p, length, L)
    _check_rescaled_margins(spec, W, dataset, margins_norm)

    return MetricsRecord(
        step=state.step,
        tau=state.tau,
        log_loss=snap.loss_log,
        norm_w=length,
        alpha=snap.alpha,
        alpha_norm=snap.alpha_norm,
        beta=snap.beta,
        zeta=state.zeta,
        theta=theta,
        j_potential=j_potential(W, grad_alpha, L),
        euler_residual=abs(euler - L * snap.beta / length ** L),
        rate_alpha=rate_alpha,
        rate_zeta=rate_zeta,
        tau_rate=loss_value * scaled_norm ** 2,
        degree=L,
        margins_norm=margins_norm,
        duals=snap.duals,
        shares=partition_shares(W, L),
        node_dirs=node_directions(W) if _has_node_rows(spec) else np.zeros((0, spec.input_dim)),
        alignment=tuple(partition_alignment(W, scaled_grad)) if scaled_norm > 0.0 else (),
    )
