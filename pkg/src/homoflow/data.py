"""Labeled examples, datasets and the planar synthetic generator."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateData, ShapeMismatch

logger = logging.getLogger(__name__)

LABELING_HIDDEN_UNITS = 16


@dataclass(frozen=True, eq=False)
class Example:
    """One labeled point (x_i, y_i) with y_i in {-1, +1}."""

    x: np.ndarray
    y: int

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=float).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")
        object.__setattr__(self, "y", int(self.y))

    def to_dict(self) -> Dict[str, Any]:
        return {"x": [float(v) for v in self.x], "y": self.y}

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Example":
        return cls(x=np.asarray(data["x"], dtype=float), y=int(data["y"]))


ExampleLike = Union[Example, Mapping[str, Any]]


def ensure_example(value: ExampleLike) -> Example:
    """Coerce dictionaries or Example instances into Example."""
    return value if isinstance(value, Example) else Example.from_mapping(value)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Examples plus the parameters that generated them."""

    examples: Tuple[Example, ...]
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        examples = tuple(ensure_example(e) for e in self.examples)
        if not examples:
            raise ShapeMismatch("a dataset needs at least one example")
        dims = {e.x.size for e in examples}
        if len(dims) != 1:
            raise ShapeMismatch(f"examples have mixed dimensions {sorted(dims)}")
        object.__setattr__(self, "examples", examples)
        object.__setattr__(self, "meta", dict(self.meta))
        X = np.stack([e.x for e in examples])
        y = np.array([e.y for e in examples], dtype=float)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "_X", X)
        object.__setattr__(self, "_y", y)

    @classmethod
    def from_arrays(cls, X: Sequence[Sequence[float]], y: Sequence[int], meta: Mapping[str, Any] | None = None) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return cls(tuple(Example(row, int(label)) for row, label in zip(X, y)), meta or {})

    @property
    def X(self) -> np.ndarray:
        return self._X  # type: ignore[attr-defined]

    @property
    def y(self) -> np.ndarray:
        return self._y  # type: ignore[attr-defined]

    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def raw_dim(self) -> int:
        """Dimension of the input plane before the appended bias coordinate."""
        return int(self.meta.get("raw_dim", self.dim))

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.X, axis=1)))

    def embed(self, points: np.ndarray) -> np.ndarray:
        """Map raw points into feature space the same way the examples were."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.meta.get("append_bias"):
            points = np.hstack([points, np.ones((points.shape[0], 1))])
        return points / float(self.meta.get("scale", 1.0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "meta": dict(self.meta),
            "examples": [example.to_dict() for example in self.examples],
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Dataset":
        examples = tuple(ensure_example(item) for item in data.get("examples") or ())
        return cls(examples, dict(data.get("meta") or {}))


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Read a dataset JSON document written by ``reporting.write_dataset``."""
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    dataset = Dataset.from_mapping(document)
    logger.info("Loaded %d examples (d=%d) from %s", dataset.n, dataset.dim, path)
    return dataset


@dataclass(frozen=True, eq=False)
class LabelingNetwork:
    """Fixed random one-hidden-layer ReLU scorer with biases."""

    weights: np.ndarray
    biases: np.ndarray
    outer: np.ndarray
    offset: float

    @classmethod
    def draw(cls, rng: np.random.Generator, hidden: int, calibration: int = 256) -> "LabelingNetwork":
        weights = rng.normal(size=(hidden, 2))
        biases = rng.normal(scale=0.5, size=hidden)
        outer = rng.normal(size=hidden)
        network = cls(weights, biases, outer, 0.0)
        # Output bias fixed once per network: minus the median score of a reference sample.
        reference = network.scores(rng.uniform(-1.0, 1.0, size=(calibration, 2)))
        return cls(weights, biases, outer, -float(np.median(reference)))

    def scores(self, points: np.ndarray) -> np.ndarray:
        hidden = np.maximum(0.0, points @ self.weights.T + self.biases)
        return hidden @ self.outer + self.offset


def _filtered_draw(
    sample: Callable[[], np.ndarray],
    score: Callable[[np.ndarray], np.ndarray],
    margin_floor: float,
    max_attempts: int,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Draw, drop |score| < floor * max|score|, and redraw while a class is empty."""
    for attempt in range(1, max_attempts + 1):
        points = sample()
        scores = score(points)
        keep = np.abs(scores) >= margin_floor * np.max(np.abs(scores))
        labels = np.where(scores >= 0.0, 1, -1)[keep]
        if np.any(labels > 0) and np.any(labels < 0):
            return points[keep], labels, attempt
        logger.debug("Attempt %d kept a single class, resampling", attempt)
    raise DegenerateData(f"one class empty after {max_attempts} attempts (seed={seed})")


def _check_arguments(n_raw: int, margin_floor: float) -> None:
    if n_raw < 4:
        raise ValueError(f"n_raw must be at least 4, got {n_raw}")
    if margin_floor < 0:
        raise ValueError(f"margin_floor must be nonnegative, got {margin_floor}")


def _scaled(features: np.ndarray, append_bias: bool) -> Tuple[np.ndarray, float]:
    if append_bias:
        features = np.hstack([features, np.ones((features.shape[0], 1))])
    scale = float(np.max(np.linalg.norm(features, axis=1)))
    return features / scale, scale


def gen_synthetic(
    seed: int,
    n_raw: int,
    margin_floor: float,
    *,
    append_bias: bool = True,
    hidden: int = LABELING_HIDDEN_UNITS,
    max_attempts: int = 100,
) -> Dataset:
    """Planar points labeled by a seeded random ReLU network with biases.

    Points whose |score| falls below ``margin_floor * max|score|`` are removed,
    a constant 1 is appended (unless ``append_bias`` is off) and everything is
    divided by the largest norm so that ||x_i|| <= 1.
    """
    _check_arguments(n_raw, margin_floor)
    rng = np.random.default_rng(seed)
    network = LabelingNetwork.draw(rng, hidden)
    points, labels, attempt = _filtered_draw(
        lambda: rng.uniform(-1.0, 1.0, size=(n_raw, 2)), network.scores, margin_floor, max_attempts, seed
    )
    features, scale = _scaled(points, append_bias)
    meta = {
        "generator": "planar-relu-labels",
        "seed": int(seed),
        "n_raw": int(n_raw),
        "margin_floor": float(margin_floor),
        "append_bias": bool(append_bias),
        "hidden": int(hidden),
        "attempts": attempt,
        "raw_dim": 2,
        "scale": scale,
    }
    logger.info(
        "Generated %d/%d planar examples (seed=%d, floor=%.3g)",
        features.shape[0], n_raw, seed, margin_floor,
    )
    return Dataset.from_arrays(features, labels.tolist(), meta)


def gen_circle_labels(
    seed: int,
    n_raw: int,
    margin_floor: float,
    *,
    append_bias: bool = False,
    hidden: int = LABELING_HIDDEN_UNITS,
    max_attempts: int = 100,
) -> Dataset:
    """Points on the unit circle labeled by the random ReLU network.

    Labels depend on the direction only, so a bias-free squared-ReLU network
    can separate the raw points (d = 2).
    """
    _check_arguments(n_raw, margin_floor)
    rng = np.random.default_rng(seed)
    network = LabelingNetwork.draw(rng, hidden)

    def sample() -> np.ndarray:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_raw)
        return np.column_stack([np.cos(angles), np.sin(angles)])

    points, labels, attempt = _filtered_draw(sample, network.scores, margin_floor, max_attempts, seed)
    features, scale = _scaled(points, append_bias)
    meta = {
        "generator": "planar-circle-labels",
        "seed": int(seed),
        "n_raw": int(n_raw),
        "margin_floor": float(margin_floor),
        "append_bias": bool(append_bias),
        "hidden": int(hidden),
        "attempts": attempt,
        "raw_dim": 2,
        "scale": scale,
    }
    logger.info("Generated %d/%d examples on the circle (seed=%d)", features.shape[0], n_raw, seed)
    return Dataset.from_arrays(features, labels.tolist(), meta)


def labels_balance(dataset: Dataset) -> List[int]:
    """Counts of (negative, positive) labels."""
    return [int(np.sum(dataset.y < 0)), int(np.sum(dataset.y > 0))]


def gen_linear_separable(
    seed: int,
    n_raw: int,
    margin_floor: float,
    *,
    append_bias: bool = False,
    max_attempts: int = 100,
) -> Dataset:
    """Planar points labeled by a seeded line through the origin.

    Same filtering and rescaling as ``gen_synthetic``; the deep linear
    predictor can only fit data of this kind.
    """
    _check_arguments(n_raw, margin_floor)
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    normal = np.array([np.cos(angle), np.sin(angle)])
    points, labels, attempt = _filtered_draw(
        lambda: rng.uniform(-1.0, 1.0, size=(n_raw, 2)), lambda pts: pts @ normal, margin_floor, max_attempts, seed
    )
    features, scale = _scaled(points, append_bias)
    meta = {
        "generator": "planar-linear-labels",
        "seed": int(seed),
        "n_raw": int(n_raw),
        "margin_floor": float(margin_floor),
        "append_bias": bool(append_bias),
        "attempts": attempt,
        "raw_dim": 2,
        "scale": scale,
    }
    logger.info("Generated %d/%d linearly labeled examples (seed=%d)", features.shape[0], n_raw, seed)
    return Dataset.from_arrays(features, labels.tolist(), meta)


GENERATORS = {
    "planar-relu-labels": gen_synthetic,
    "planar-circle-labels": gen_circle_labels,
    "planar-linear-labels": gen_linear_separable,
}
