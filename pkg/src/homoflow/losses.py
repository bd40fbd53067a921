"""Exponential and logistic losses, smoothed margins, dual weights and beta.

Exp quantities are evaluated in the log domain; logistic ones route through
log1p/expm1 with series branches where those lose digits.  Totals are
returned as log L(W) so that accuracies far past L(W) = 1e-300 stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .errors import DomainError

SERIES_THRESHOLD = 1e-12
TAIL_THRESHOLD = 35.0

RealOrArray = Union[float, np.ndarray]


class LossKind(str, Enum):
    EXP = "exp"
    LOGISTIC = "logistic"


def _kind(kind: Union[LossKind, str]) -> LossKind:
    return LossKind(kind)


def ell(kind: Union[LossKind, str], z: RealOrArray) -> RealOrArray:
    """l(z): e^{-z} or ln(1 + e^{-z})."""
    z = np.asarray(z, dtype=float)
    if _kind(kind) is LossKind.EXP:
        value = np.exp(-z)
    else:
        value = np.logaddexp(0.0, -z)
    return value if value.ndim else float(value)


def ell_prime(kind: Union[LossKind, str], z: RealOrArray) -> RealOrArray:
    """l'(z) < 0."""
    z = np.asarray(z, dtype=float)
    if _kind(kind) is LossKind.EXP:
        value = -np.exp(-z)
    else:
        value = -expit(-z)
    return value if value.ndim else float(value)


def ell_inverse(kind: Union[LossKind, str], v: float) -> float:
    """l^{-1}(v) for v > 0 in the range of l."""
    v = float(v)
    if not v > 0.0:
        raise DomainError(f"loss inverse needs v > 0, got {v}")
    if _kind(kind) is LossKind.EXP:
        return -math.log(v)
    return _logistic_inverse_from_log(math.log(v))


def _logistic_inverse_from_log(log_v: float) -> float:
    """-ln(e^v - 1) given ln v, accurate for tiny and huge v."""
    v = math.exp(log_v)
    if v < SERIES_THRESHOLD:
        # ln(expm1(v)) = ln v + v/2 + O(v^2)
        return -log_v - 0.5 * v
    if v > TAIL_THRESHOLD:
        return -v - math.log1p(-math.exp(-v))
    return -math.log(math.expm1(v))


def log_ell(kind: Union[LossKind, str], z: RealOrArray) -> RealOrArray:
    """ln l(z) without underflow for large z."""
    z = np.asarray(z, dtype=float)
    if _kind(kind) is LossKind.EXP:
        value = -z
    else:
        tail = z > TAIL_THRESHOLD
        safe = np.where(tail, 0.0, z)
        value = np.where(
            tail,
            -z + np.log1p(-0.5 * np.exp(-np.where(tail, z, 0.0))),
            np.log(np.logaddexp(0.0, -safe)),
        )
    return value if value.ndim else float(value)


def _logsumexp_extended(values: np.ndarray) -> float:
    wide = np.asarray(values, dtype=np.longdouble)
    top = np.max(wide)
    return float(top + np.log(np.sum(np.exp(wide - top))))


def log_total_loss(kind: Union[LossKind, str], margins: np.ndarray, extended: bool = False) -> float:
    """ln L(W) = ln sum_i l(p_i)."""
    logs = log_ell(kind, np.asarray(margins, dtype=float))
    logs = np.atleast_1d(logs)
    if extended:
        return _logsumexp_extended(logs)
    return float(logsumexp(logs))


def total_loss(kind: Union[LossKind, str], margins: np.ndarray) -> float:
    return math.exp(log_total_loss(kind, margins))


def alpha_from_log_loss(kind: Union[LossKind, str], log_loss: float) -> float:
    """alpha = l^{-1}(L) from ln L."""
    if _kind(kind) is LossKind.EXP:
        return -log_loss
    return _logistic_inverse_from_log(log_loss)


def smoothed_margin(kind: Union[LossKind, str], margins: np.ndarray, extended: bool = False) -> float:
    """alpha(W) = l^{-1}(sum_i l(p_i)) <= min_i p_i."""
    p = np.atleast_1d(np.asarray(margins, dtype=float))
    if p.size == 1:
        return float(p[0])
    return alpha_from_log_loss(kind, log_total_loss(kind, p, extended=extended))


def _log_neg_ell_prime(kind: LossKind, z: RealOrArray) -> RealOrArray:
    """ln(-l'(z))."""
    z = np.asarray(z, dtype=float)
    if kind is LossKind.EXP:
        return -z
    return -np.logaddexp(0.0, z)


def dual_weights(kind: Union[LossKind, str], margins: np.ndarray) -> np.ndarray:
    """q_i = l'(p_i) / l'(alpha)."""
    kind = _kind(kind)
    p = np.atleast_1d(np.asarray(margins, dtype=float))
    if p.size == 1:
        return np.ones(1)
    if kind is LossKind.EXP:
        return softmax(-p)
    alpha = smoothed_margin(kind, p)
    return np.exp(_log_neg_ell_prime(kind, p) - _log_neg_ell_prime(kind, alpha))


def scaled_loss_weights(kind: Union[LossKind, str], margins: np.ndarray, log_loss: float) -> np.ndarray:
    """l'(p_i) / L(W), so that grad L / L = sum_i w_i grad p_i."""
    kind = _kind(kind)
    p = np.atleast_1d(np.asarray(margins, dtype=float))
    return -np.exp(_log_neg_ell_prime(kind, p) - log_loss)


def alpha_gradient_factor(kind: Union[LossKind, str], alpha: float, log_loss: float) -> float:
    """L(W) / l'(alpha), so that grad alpha = (grad L / L) * factor."""
    kind = _kind(kind)
    return -math.exp(log_loss - float(_log_neg_ell_prime(kind, alpha)))


def beta(kind: Union[LossKind, str], margins: np.ndarray) -> float:
    """beta(W) = sum_i q_i p_i."""
    p = np.atleast_1d(np.asarray(margins, dtype=float))
    q = dual_weights(kind, p)
    return math.fsum(q * p)


def sigma(kind: Union[LossKind, str], z: float) -> float:
    """sigma(z) = l'(l^{-1}(z)) l^{-1}(z) on (0, l(0)]."""
    kind = _kind(kind)
    z = float(z)
    if not 0.0 < z <= ell(kind, 0.0):
        raise DomainError(f"sigma is defined on (0, l(0)], got {z}")
    if kind is LossKind.EXP:
        return z * math.log(z)
    return -math.expm1(-z) * math.log(math.expm1(z))


def pi(kind: Union[LossKind, str], v: np.ndarray) -> float:
    """pi(v) = l^{-1}(sum_i l(v_i)); identical to the smoothed margin."""
    return smoothed_margin(kind, v)


@dataclass(frozen=True, eq=False)
class MarginSnapshot:
    """Loss-side view of one parameter vector."""

    margins: np.ndarray
    loss_log: float
    alpha: float
    alpha_norm: float
    beta: float
    duals: np.ndarray

    @property
    def loss_total(self) -> float:
        return math.exp(self.loss_log)


def snapshot(
    kind: Union[LossKind, str],
    margins: np.ndarray,
    norm_W: float = 1.0,
    degree: float = 1.0,
    extended: bool = False,
) -> MarginSnapshot:
    p = np.atleast_1d(np.asarray(margins, dtype=float))
    loss_log = log_total_loss(kind, p, extended=extended)
    alpha = smoothed_margin(kind, p, extended=extended)
    q = dual_weights(kind, p)
    return MarginSnapshot(
        margins=p,
        loss_log=loss_log,
        alpha=alpha,
        alpha_norm=alpha / norm_W ** degree,
        beta=math.fsum(q * p),
        duals=q,
    )
