"""Independent oracles and end-to-end checks of the margin-maximization limits."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.special import softmax

from .data import Dataset
from .errors import NotConverged, NotSeparable, ShapeMismatch, UnsupportedDimension, ZeroMatrix
from .flow import Trajectory
from .losses import LossKind, dual_weights
from .metrics import covering_check, node_directions
from .models import PredictorKind, PredictorSpec, feature_matrix, margins
from .params import norm, partition_shares

logger = logging.getLogger(__name__)

DEFAULT_MARGIN_TOL = 1e-8
DEFAULT_GAME_TOL = 1e-4
CHECK_EVERY = 50
SUPPORT_THRESHOLDS = (0.05, 0.01, 1e-3)


@dataclass(frozen=True, eq=False)
class MaxMarginResult:
    direction: np.ndarray
    margin: float
    certificate_gap: float
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class GameResult:
    """Approximate equilibrium of min_q max_s q^T M s."""

    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    gap: float
    iterations: int = 0
    method: str = "hedge"


@dataclass(frozen=True, eq=False)
class GlobalMarginResult:
    value: float
    lower: float
    upper: float
    slack: float
    atoms: np.ndarray


@dataclass(frozen=True, slots=True)
class CheckResult:
    value: float
    tolerance: Optional[float]
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "tolerance": self.tolerance, "pass": self.passed}


@dataclass
class VerifyReport:
    """Named residuals with their tolerances and pass flags."""

    name: str
    checks: Dict[str, CheckResult] = field(default_factory=dict)

    def add(self, check: str, value: float, tolerance: float) -> CheckResult:
        """Record ``value <= tolerance`` as a gating check."""
        value = _finite(check, value)
        result = CheckResult(value=value, tolerance=float(tolerance), passed=value <= tolerance)
        self.checks[check] = result
        return result

    def note(self, check: str, value: float) -> None:
        """Informational entry; never fails the report."""
        self.checks[check] = CheckResult(value=_finite(check, value), tolerance=None, passed=True)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.checks.values())

    def failed_checks(self) -> List[str]:
        return [name for name, result in self.checks.items() if not result.passed]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: result.to_dict() for name, result in self.checks.items()}


def _finite(check: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        logger.warning("Check %s produced a non-finite value %r", check, value)
        return float(np.nan_to_num(value, nan=1e308, posinf=1e308, neginf=-1e308))
    return value


def max_margin_linear(dataset: Dataset, tol: float = DEFAULT_MARGIN_TOL, max_iter: int = 1_000_000) -> MaxMarginResult:
    """Hard-margin direction as the min-norm point of conv{y_i x_i}.

    Mitchell-Dem'yanov-Malozemov iterations: move weight from the support
    point with the largest <z_j, x> to the point with the smallest, with exact
    line search.  Stops once ||x|| - min_i <z_i, x> / ||x|| <= tol, which
    brackets the true margin.
    """
    Z = dataset.y[:, None] * dataset.X
    gram = Z @ Z.T
    weights = np.zeros(dataset.n)
    weights[int(np.argmin(np.diag(gram)))] = 1.0
    products = gram @ weights

    for iteration in range(1, max_iter + 1):
        if iteration % 1000 == 0:
            products = gram @ weights
        squared = float(weights @ products)
        x_norm = math.sqrt(max(squared, 0.0))
        if x_norm <= tol:
            raise NotSeparable("the origin lies in the convex hull of y_i x_i")
        low = int(np.argmin(products))
        gap = x_norm - products[low] / x_norm
        if gap <= tol:
            break
        support = np.flatnonzero(weights > 0.0)
        high = int(support[np.argmax(products[support])])
        spread = gram[low, low] + gram[high, high] - 2.0 * gram[low, high]
        shift = weights[high]
        if spread > 0.0:
            shift = min(shift, (products[high] - products[low]) / spread)
        weights[high] -= shift
        weights[low] += shift
        products = products + shift * (gram[:, low] - gram[:, high])
    else:
        raise NotConverged(f"min-norm point did not reach gap {tol} in {max_iter} iterations")

    point = weights @ Z
    x_norm = norm(point)
    if x_norm <= tol:
        raise NotSeparable("the origin lies in the convex hull of y_i x_i")
    direction = point / x_norm
    margin = float(np.min(Z @ direction))
    return MaxMarginResult(
        direction=direction,
        margin=margin,
        certificate_gap=max(0.0, x_norm - margin),
        iterations=iteration,
    )


def grid_margin_2d(dataset: Dataset, grid_size: int = 1_000_000) -> Tuple[np.ndarray, float]:
    """Brute-force best unit direction over an angle grid (d = 2 only)."""
    if dataset.dim != 2:
        raise UnsupportedDimension("angle grid search runs in the plane")
    angles = 2.0 * np.pi * np.arange(grid_size) / grid_size
    cosines, sines = np.cos(angles), np.sin(angles)
    Z = dataset.y[:, None] * dataset.X
    best = np.full(grid_size, np.inf)
    for row in Z:
        best = np.minimum(best, row[0] * cosines + row[1] * sines)
    index = int(np.argmax(best))
    return np.array([np.cos(angles[index]), np.sin(angles[index])]), float(best[index])


def rank_one_residual(A: np.ndarray) -> float:
    """sigma_2 / sigma_1; 0 means exactly rank one."""
    values = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)), compute_uv=False)
    if values.size == 0 or values[0] == 0.0:
        raise ZeroMatrix("rank residual of the zero matrix")
    if values.size < 2:
        return 0.0
    return float(values[1] / values[0])


def top_singular_vectors(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    left, _, right = np.linalg.svd(np.atleast_2d(np.asarray(A, dtype=float)))
    return left[:, 0], right[0]


def certify(M: np.ndarray, row: np.ndarray, col: np.ndarray) -> Tuple[float, float]:
    """(value estimate, duality gap) from exact best responses."""
    upper = float(np.max(row @ M))
    lower = float(np.min(M @ col))
    return 0.5 * (upper + lower), upper - lower


def _simplex(values: np.ndarray) -> np.ndarray:
    clipped = np.clip(values, 0.0, None)
    total = clipped.sum()
    return clipped / total if total > 0 else np.full(values.size, 1.0 / values.size)


def _solve_supports(
    M: np.ndarray, rows: Tuple[int, ...], cols: Tuple[int, ...], eps: float
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Strategies that equalize payoffs on the given square supports, if any."""
    n, m = M.shape
    size = len(rows)
    block = M[np.ix_(rows, cols)]
    system = np.zeros((size + 1, size + 1))
    system[:size, :size] = block.T
    system[:size, size] = -1.0
    system[size, :size] = 1.0
    rhs = np.zeros(size + 1)
    rhs[size] = 1.0
    col_system = system.copy()
    col_system[:size, :size] = block
    try:
        row_part = np.linalg.solve(system, rhs)
        col_part = np.linalg.solve(col_system, rhs)
    except np.linalg.LinAlgError:
        return None
    if np.any(row_part[:size] < -eps) or np.any(col_part[:size] < -eps):
        return None
    row = np.zeros(n)
    row[list(rows)] = row_part[:size]
    col = np.zeros(m)
    col[list(cols)] = col_part[:size]
    return _simplex(row), _simplex(col)


def _polish(M: np.ndarray, row: np.ndarray, col: np.ndarray, tol: float) -> Optional[Tuple[float, np.ndarray, np.ndarray, float]]:
    """Exact equilibrium on the supports a hedge iterate points at."""
    for threshold in SUPPORT_THRESHOLDS:
        rows = tuple(int(i) for i in np.flatnonzero(row > threshold))
        cols = tuple(int(j) for j in np.flatnonzero(col > threshold))
        if not rows or len(rows) != len(cols):
            continue
        solved = _solve_supports(M, rows, cols, 1e-12)
        if solved is None:
            continue
        value, gap = certify(M, *solved)
        if gap <= tol:
            return value, solved[0], solved[1], gap
    return None


def _game_by_hedge(M: np.ndarray, tol: float, max_iter: int) -> GameResult:
    n, m = M.shape
    spread = float(M.max() - M.min()) or 1.0
    rate = 0.1 / spread
    log_row, log_col = np.zeros(n), np.zeros(m)
    last_loss, last_gain = np.zeros(n), np.zeros(m)
    row_sum, col_sum = np.zeros(n), np.zeros(m)
    for iteration in range(1, max_iter + 1):
        row, col = softmax(log_row), softmax(log_col)
        loss, gain = M @ col, row @ M
        log_row -= rate * (2.0 * loss - last_loss)
        log_col += rate * (2.0 * gain - last_gain)
        last_loss, last_gain = loss, gain
        row_sum += row
        col_sum += col
        if iteration % CHECK_EVERY:
            continue
        for candidate_row, candidate_col in ((row, col), (row_sum / iteration, col_sum / iteration)):
            value, gap = certify(M, candidate_row, candidate_col)
            if gap <= tol:
                return GameResult(value, candidate_row, candidate_col, gap, iteration, "hedge")
            polished = _polish(M, candidate_row, candidate_col, tol)
            if polished is not None:
                return GameResult(*polished, iteration, "hedge")
    raise NotConverged(f"multiplicative weights did not reach gap {tol} in {max_iter} iterations")


def _game_by_lp(M: np.ndarray, tol: float) -> GameResult:
    n, m = M.shape
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    A_ub = np.hstack([M.T, -np.ones((m, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
    bounds = [(0.0, None)] * n + [(None, None)]
    result = linprog(cost, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if result.status != 0:
        raise NotConverged(f"linear program failed: {result.message}")
    row = _simplex(result.x[:n])
    col = _simplex(-np.asarray(result.ineqlin.marginals))
    value, gap = certify(M, row, col)
    if gap > tol:
        raise NotConverged(f"linear program gap {gap:.3g} exceeds {tol}")
    return GameResult(value, row, col, gap, int(result.nit), "lp")


def game_value(M: np.ndarray, tol: float = DEFAULT_GAME_TOL, method: str = "hedge", max_iter: int = 1_000_000) -> GameResult:
    """Value of the zero-sum game where rows minimize and columns maximize."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ShapeMismatch("payoff matrix must be finite")
    if method == "hedge":
        return _game_by_hedge(M, tol, max_iter)
    if method == "lp":
        return _game_by_lp(M, tol)
    raise ValueError(f"unknown game method {method!r}")


def support_enumeration(M: np.ndarray, eps: float = 1e-9) -> GameResult:
    """Exhaustive equilibrium search over equal-size support pairs (n, m <= 6)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n, m = M.shape
    if max(n, m) > 6:
        raise ValueError("support enumeration is limited to 6 x 6 games")
    for size in range(1, min(n, m) + 1):
        for rows in itertools.combinations(range(n), size):
            for cols in itertools.combinations(range(m), size):
                solved = _solve_supports(M, rows, cols, eps)
                if solved is None:
                    continue
                row, col = solved
                value, gap = certify(M, row, col)
                if gap <= eps * max(1.0, abs(value)) * 10:
                    return GameResult(value, row, col, gap, 0, "support-enumeration")
    raise NotConverged("no equilibrium found among square supports (degenerate game)")


def local_guarantee_value(phi: np.ndarray) -> float:
    """min_i max_j phi_ij."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    return float(np.min(np.max(phi, axis=1)))


def global_margin_2d(
    dataset: Dataset,
    grid_size: int = 4096,
    tol: float = 1e-6,
    method: str = "lp",
) -> GlobalMarginResult:
    """Best margin of a signed measure (mass <= 1) over grid atoms on the circle."""
    if dataset.dim != 2:
        raise UnsupportedDimension(f"the global margin is computed on the circle (d=2), got d={dataset.dim}")
    if dataset.max_norm() > 1.0 + 1e-9:
        raise ValueError("the global guarantee assumes ||x_i|| <= 1")
    angles = 2.0 * np.pi * np.arange(grid_size) / grid_size
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    features = np.maximum(0.0, dataset.X @ directions.T) ** 2
    payoff = dataset.y[:, None] * np.hstack([features, -features, np.zeros((dataset.n, 1))])
    game = game_value(payoff, tol=tol, method=method)
    slack = 2.0 * (2.0 * np.pi / grid_size)
    return GlobalMarginResult(
        value=game.value,
        lower=game.value - slack,
        upper=game.value + slack,
        slack=slack,
        atoms=game.col_strategy,
    )


def _final_params(trajectory: Trajectory):
    if trajectory.final is None:
        raise ValueError("trajectory has no final state")
    return trajectory.final.W


def verify_deep_linear(
    trajectory: Trajectory,
    dataset: Dataset,
    spec: PredictorSpec,
    tol_rank: float = 1e-2,
    tol_angle: float = 1e-2,
) -> VerifyReport:
    """Rank-one layers, chained singular directions and the max-margin product."""
    if spec.kind is not PredictorKind.DEEP_LINEAR:
        raise ShapeMismatch("deep linear verification needs a deep linear predictor")
    W = _final_params(trajectory)
    layers = W.blocks()
    report = VerifyReport(name="deep-linear")

    for index, A in enumerate(layers, start=1):
        report.add(f"rank_one_A{index}", rank_one_residual(A), tol_rank)

    for index in range(1, len(layers)):
        _, right = top_singular_vectors(layers[index])
        left, _ = top_singular_vectors(layers[index - 1])
        report.add(f"chain_A{index + 1}_A{index}", 1.0 - abs(float(np.dot(right, left))), tol_rank)

    product = layers[0]
    for A in layers[1:]:
        product = A @ product
    product = product.ravel()
    oracle = max_margin_linear(dataset)
    cosine = float(np.dot(product, oracle.direction)) / norm(product)
    report.add("product_angle", math.acos(min(1.0, max(-1.0, cosine))), tol_angle)
    report.note("max_margin", oracle.margin)
    report.note("max_margin_certificate_gap", oracle.certificate_gap)
    logger.info("Deep linear verification: %s", "pass" if report.passed else f"fail {report.failed_checks()}")
    return report


def verify_two_homo(
    trajectory: Trajectory,
    dataset: Dataset,
    spec: PredictorSpec,
    kind: LossKind,
    cover_grid: int = 4096,
    tol: float = 1e-2,
) -> VerifyReport:
    """Local and (in the plane) global margin guarantees of a squared-ReLU run."""
    if spec.kind is not PredictorKind.SQUARED_RELU:
        raise ShapeMismatch("two-homogeneous verification needs a squared-ReLU predictor")
    W = _final_params(trajectory)
    length = norm(W)
    p = margins(spec, W, dataset.X, dataset.y)
    normalized = p / length ** 2
    final_margin = float(np.min(normalized))
    report = VerifyReport(name="two-homo")
    report.note("final_margin", final_margin)

    shares = partition_shares(W, 2.0)
    report.add("shares_simplex", max(abs(float(shares.sum()) - 1.0), -float(min(shares.min(), 0.0))), 1e-6)

    thetas = node_directions(W)
    phi = feature_matrix(dataset, thetas, spec.signs)
    # The limit margin is the value of the linear game over the frozen node
    # features; min_i max_j phi_ij only bounds it from above.
    report.note("min_max_features", local_guarantee_value(phi))
    game = game_value(phi, tol=min(tol, DEFAULT_GAME_TOL), method="lp")
    report.note("matrix_game_value", game.value)
    report.add("local_guarantee", abs(final_margin - game.value), tol)

    q = dual_weights(kind, p)
    a = final_margin
    report.add("dual_mass", abs(float(q.sum()) - 1.0), 1e-3)
    off_support = normalized > final_margin + 0.05 * abs(a)
    report.add("dual_off_support", float(q[off_support].sum()), 1e-2)

    support = shares > 10.0 * tol
    if np.any(support) and a != 0.0:
        row_value = (q / q.sum()) @ phi[:, support]
        report.add("support_attains_value", float(np.max(np.abs(row_value - a))) / abs(a), tol)

    if dataset.dim == 2 and trajectory.records:
        start = trajectory.records[0].node_dirs
        cover = covering_check(start, spec.signs, cover_grid, final_dirs=thetas)
        epsilon = max(cover.epsilon_cover, cover.epsilon_drift or 0.0)
        report.note("epsilon_cover", cover.epsilon_cover)
        report.note("epsilon_drift", cover.epsilon_drift or 0.0)
        best = global_margin_2d(dataset, cover_grid)
        report.note("global_margin", best.value)
        report.add("global_slack", best.value - 4.0 * epsilon - final_margin, tol)
    else:
        logger.info("Global guarantee skipped: input dimension %d is not 2", dataset.dim)

    logger.info("Two-homogeneous verification: %s", "pass" if report.passed else f"fail {report.failed_checks()}")
    return report
