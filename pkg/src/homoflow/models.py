"""Positively homogeneous predictors with hand-coded gradients.

Every architecture is evaluated in batch over an (n, d) input matrix; the
per-example operations are thin wrappers around the batched ones.  At
nondifferentiable points the derivative of ReLU and squared ReLU is taken to
be 0 and max-pooling ties go to the lowest index, so a kink always resolves to
the same element of the Clarke subdifferential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset, ExampleLike, ensure_example
from .errors import ShapeMismatch
from .params import ArrayLike, ParamVec, Segment, as_array

logger = logging.getLogger(__name__)

KINK_TOLERANCE = 1e-12


class PredictorKind(str, Enum):
    SQUARED_RELU = "squared-relu"
    DEEP_LINEAR = "deep-linear"
    RELU_MLP = "relu-mlp"
    NTK_FROZEN = "ntk-frozen"


def alternating_sign(j: int) -> int:
    """Sign of node j (counting from zero); the first node is negative."""
    return -1 if j % 2 == 0 else 1


@dataclass(frozen=True, eq=False)
class PredictorSpec:
    """Architecture descriptor.

    ``width`` and ``signs`` are used by the squared-ReLU and NTK kinds,
    ``layer_sizes`` (input dim first, output 1 last) by the deep linear and
    ReLU MLP kinds.  ``frozen_weights`` holds the fixed inner rows of the NTK
    predictor.
    """

    kind: PredictorKind
    input_dim: int
    width: int = 0
    layer_sizes: Tuple[int, ...] = ()
    pool_window: int = 1
    signs: Tuple[int, ...] = ()
    frozen_weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PredictorKind(self.kind))
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if self.input_dim <= 0:
            raise ShapeMismatch("input_dim must be positive")

        if self.kind in (PredictorKind.SQUARED_RELU, PredictorKind.NTK_FROZEN):
            if self.width <= 0:
                raise ShapeMismatch(f"{self.kind.value} needs a positive width")
            if len(self.signs) != self.width or any(s not in (-1, 1) for s in self.signs):
                raise ShapeMismatch("signs must hold one entry in {-1, +1} per node")
        else:
            sizes = self.layer_sizes
            if len(sizes) < 2 or sizes[0] != self.input_dim or sizes[-1] != 1:
                raise ShapeMismatch(
                    f"layer_sizes must run from input_dim={self.input_dim} down to 1, got {sizes}"
                )
            if self.kind is PredictorKind.RELU_MLP:
                if self.pool_window < 1:
                    raise ShapeMismatch("pool_window must be at least 1")
                for hidden in sizes[1:-1]:
                    if hidden % self.pool_window:
                        raise ShapeMismatch(
                            f"hidden width {hidden} is not divisible by pool window {self.pool_window}"
                        )

        if self.kind is PredictorKind.NTK_FROZEN:
            frozen = np.array(self.frozen_weights, dtype=float)
            if frozen.shape != (self.width, self.input_dim):
                raise ShapeMismatch(
                    f"frozen weights must have shape {(self.width, self.input_dim)}, got {frozen.shape}"
                )
            frozen.setflags(write=False)
            object.__setattr__(self, "frozen_weights", frozen)

    @property
    def degree(self) -> float:
        if self.kind is PredictorKind.SQUARED_RELU:
            return 2.0
        if self.kind is PredictorKind.NTK_FROZEN:
            return 1.0
        return float(len(self.layer_sizes) - 1)

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(out, in) shape of each weight matrix A_1 .. A_L."""
        shapes: List[Tuple[int, int]] = []
        fan_in = self.layer_sizes[0]
        for index, fan_out in enumerate(self.layer_sizes[1:], start=1):
            shapes.append((fan_out, fan_in))
            is_hidden = index < len(self.layer_sizes) - 1
            pool = self.pool_window if self.kind is PredictorKind.RELU_MLP and is_hidden else 1
            fan_in = fan_out // pool
        return shapes

    @property
    def partition(self) -> Tuple[Segment, ...]:
        segments: List[Segment] = []
        offset = 0
        if self.kind in (PredictorKind.SQUARED_RELU, PredictorKind.NTK_FROZEN):
            prefix = "w" if self.kind is PredictorKind.SQUARED_RELU else "v"
            for j in range(self.width):
                segments.append(Segment(f"{prefix}{j}", offset, self.input_dim))
                offset += self.input_dim
        else:
            for index, shape in enumerate(self.layer_shapes(), start=1):
                size = shape[0] * shape[1]
                segments.append(Segment(f"A{index}", offset, size, shape))
                offset += size
        return tuple(segments)

    @property
    def num_params(self) -> int:
        return sum(segment.length for segment in self.partition)

    def wrap(self, values: ArrayLike) -> ParamVec:
        """Attach this architecture's partition to a raw flat vector."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.num_params:
            raise ShapeMismatch(f"{self.kind.value} needs {self.num_params} parameters, got {values.size}")
        return ParamVec(values, self.partition)

    def describe(self) -> str:
        if self.kind in (PredictorKind.SQUARED_RELU, PredictorKind.NTK_FROZEN):
            return f"{self.kind.value}(d={self.input_dim}, m={self.width})"
        pool = f", pool={self.pool_window}" if self.pool_window > 1 else ""
        return f"{self.kind.value}({'x'.join(str(s) for s in self.layer_sizes)}{pool})"


def squared_relu_spec(d: int, m: int, signs: Optional[Sequence[int]] = None) -> PredictorSpec:
    chosen = tuple(signs) if signs is not None else tuple(alternating_sign(j) for j in range(m))
    return PredictorSpec(PredictorKind.SQUARED_RELU, input_dim=d, width=m, signs=chosen)


def random_signs(m: int, rng: np.random.Generator) -> Tuple[int, ...]:
    return tuple(int(s) for s in rng.choice((-1, 1), size=m))


def deep_linear_spec(sizes: Sequence[int]) -> PredictorSpec:
    return PredictorSpec(PredictorKind.DEEP_LINEAR, input_dim=int(sizes[0]), layer_sizes=tuple(sizes))


def relu_mlp_spec(d: int, hidden: Sequence[int], pool_window: int = 1) -> PredictorSpec:
    sizes = (d, *hidden, 1)
    return PredictorSpec(PredictorKind.RELU_MLP, input_dim=d, layer_sizes=sizes, pool_window=pool_window)


def ntk_frozen_spec(base: PredictorSpec, base_W: ParamVec) -> PredictorSpec:
    """Freeze the rows and signs of a squared-ReLU predictor; only outer vectors train."""
    if base.kind is not PredictorKind.SQUARED_RELU:
        raise ShapeMismatch("the frozen-feature predictor is built from a squared-ReLU network")
    frozen = np.asarray(base_W.data, dtype=float).reshape(base.width, base.input_dim)
    return PredictorSpec(
        PredictorKind.NTK_FROZEN,
        input_dim=base.input_dim,
        width=base.width,
        signs=base.signs,
        frozen_weights=frozen,
    )


def init_params(spec: PredictorSpec, rng: np.random.Generator, scale: float = 1.0) -> ParamVec:
    """Gaussian initialization, variance scale**2 / fan_in per block."""
    blocks = []
    for segment in spec.partition:
        fan_in = segment.view_shape[-1]
        block = rng.normal(scale=scale / np.sqrt(fan_in), size=segment.view_shape)
        blocks.append(block.ravel())
    return spec.wrap(np.concatenate(blocks))


def degree(spec: PredictorSpec) -> float:
    return spec.degree


def _inputs(spec: PredictorSpec, X: ArrayLike) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(X, dtype=float))
    if inputs.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"inputs have dimension {inputs.shape[1]}, predictor expects {spec.input_dim}")
    return inputs


def _weights(spec: PredictorSpec, W: Union[ParamVec, ArrayLike]) -> np.ndarray:
    values = as_array(W).ravel()
    if values.size != spec.num_params:
        raise ShapeMismatch(f"{spec.describe()} needs {spec.num_params} parameters, got {values.size}")
    return values


def _layers(spec: PredictorSpec, values: np.ndarray) -> List[np.ndarray]:
    return [values[s.offset:s.stop].reshape(s.view_shape) for s in spec.partition]


def _note_kinks(preactivations: np.ndarray, where: str) -> None:
    near = int(np.count_nonzero(np.abs(preactivations) <= KINK_TOLERANCE))
    if near:
        logger.debug("%d pre-activations within %.0e of a kink in %s", near, KINK_TOLERANCE, where)


def _forward_backward(
    spec: PredictorSpec,
    values: np.ndarray,
    X: np.ndarray,
    want_grad: bool,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Predictions (n,) and, on request, the Jacobian d Phi / dW (n, k)."""
    n = X.shape[0]
    signs = np.asarray(spec.signs, dtype=float)

    if spec.kind is PredictorKind.SQUARED_RELU:
        rows = values.reshape(spec.width, spec.input_dim)
        pre = X @ rows.T
        _note_kinks(pre, spec.describe())
        active = np.maximum(0.0, pre)
        out = (active * active) @ signs
        if not want_grad:
            return out, None
        coeff = 2.0 * active * signs
        jac = coeff[:, :, None] * X[:, None, :]
        return out, jac.reshape(n, -1)

    if spec.kind is PredictorKind.NTK_FROZEN:
        frozen = np.maximum(0.0, X @ spec.frozen_weights.T)
        outer = values.reshape(spec.width, spec.input_dim)
        out = np.sum((X @ outer.T) * frozen * signs, axis=1)
        if not want_grad:
            return out, None
        jac = (frozen * signs)[:, :, None] * X[:, None, :]
        return out, jac.reshape(n, -1)

    layers = _layers(spec, values)
    depth = len(layers)
    relu = spec.kind is PredictorKind.RELU_MLP
    pool = spec.pool_window if relu else 1

    inputs: List[np.ndarray] = []
    pre_acts: List[np.ndarray] = []
    winners: List[Optional[np.ndarray]] = []
    current = X
    for index, A in enumerate(layers):
        inputs.append(current)
        z = current @ A.T
        if index == depth - 1 or not relu:
            pre_acts.append(z)
            winners.append(None)
            current = z
            continue
        _note_kinks(z, f"{spec.describe()} layer {index + 1}")
        pre_acts.append(z)
        activated = np.maximum(0.0, z)
        if pool > 1:
            windows = activated.reshape(n, -1, pool)
            winner = np.argmax(windows, axis=2)
            winners.append(winner)
            current = np.take_along_axis(windows, winner[:, :, None], axis=2)[:, :, 0]
        else:
            winners.append(None)
            current = activated
    out = current[:, 0]
    if not want_grad:
        return out, None

    grads: List[np.ndarray] = [np.empty(0)] * depth
    delta = np.ones((n, 1))
    for index in range(depth - 1, -1, -1):
        A = layers[index]
        grads[index] = (delta[:, :, None] * inputs[index][:, None, :]).reshape(n, -1)
        if index == 0:
            break
        upstream = delta @ A
        below = index - 1
        if relu:
            winner = winners[below]
            if winner is not None:
                spread = np.zeros((n, upstream.shape[1], pool))
                np.put_along_axis(spread, winner[:, :, None], upstream[:, :, None], axis=2)
                upstream = spread.reshape(n, -1)
            upstream = upstream * (pre_acts[below] > 0.0)
        delta = upstream
    return out, np.concatenate(grads, axis=1)


def predict(spec: PredictorSpec, W: Union[ParamVec, ArrayLike], X: ArrayLike) -> np.ndarray:
    """Phi(x_i; W) for every row of X."""
    out, _ = _forward_backward(spec, _weights(spec, W), _inputs(spec, X), want_grad=False)
    return out


def margins(spec: PredictorSpec, W: Union[ParamVec, ArrayLike], X: ArrayLike, y: ArrayLike) -> np.ndarray:
    """p_i(W) = y_i Phi(x_i; W)."""
    return np.asarray(y, dtype=float) * predict(spec, W, X)


def margin_jacobian(
    spec: PredictorSpec,
    W: Union[ParamVec, ArrayLike],
    X: ArrayLike,
    y: ArrayLike,
) -> Tuple[np.ndarray, np.ndarray]:
    """Margins (n,) and their gradients stacked as rows (n, k)."""
    out, jac = _forward_backward(spec, _weights(spec, W), _inputs(spec, X), want_grad=True)
    labels = np.asarray(y, dtype=float)
    return labels * out, labels[:, None] * jac


def forward(spec: PredictorSpec, W: Union[ParamVec, ArrayLike], x: ArrayLike) -> float:
    return float(predict(spec, W, np.asarray(x, dtype=float)[None, :])[0])


def margin(spec: PredictorSpec, W: Union[ParamVec, ArrayLike], example: ExampleLike) -> float:
    example = ensure_example(example)
    return example.y * forward(spec, W, example.x)


def grad_margin(spec: PredictorSpec, W: Union[ParamVec, ArrayLike], example: ExampleLike) -> np.ndarray:
    """a.e. gradient of p(W) for one example under the fixed kink convention."""
    example = ensure_example(example)
    _, jac = margin_jacobian(spec, W, example.x[None, :], [example.y])
    return jac[0]


def node_features(
    example: ExampleLike,
    theta: ArrayLike,
    j: int,
    signs: Optional[Sequence[int]] = None,
) -> float:
    """phi_ij(theta) = y_i s_j max{0, theta^T x_i}^2.

    Nodes are numbered from zero, so without ``signs`` node 0 carries -1 and
    node 1 carries +1 (the first node is negative).
    """
    example = ensure_example(example)
    sign = signs[j] if signs is not None else alternating_sign(j)
    value = max(0.0, float(np.dot(np.asarray(theta, dtype=float), example.x)))
    return example.y * sign * value * value


def feature_matrix(dataset: Dataset, thetas: np.ndarray, signs: Sequence[int]) -> np.ndarray:
    """phi_ij(theta_j) for every example i and node j, shape (n, m)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    active = np.maximum(0.0, dataset.X @ thetas.T)
    return dataset.y[:, None] * np.asarray(signs, dtype=float)[None, :] * active * active
