"""Flat parameter vectors, partitions, norms and radial/spherical splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidPartition, NonFiniteParameters, ShapeMismatch, ZeroNorm


ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass(frozen=True, slots=True)
class Segment:
    """Named contiguous slice ``[offset, offset + length)`` of a parameter vector.

    ``shape`` records how the slice is viewed (a weight matrix, a node row).
    """

    name: str
    offset: int
    length: int
    shape: Tuple[int, ...] = ()

    @property
    def stop(self) -> int:
        return self.offset + self.length

    @property
    def view_shape(self) -> Tuple[int, ...]:
        return self.shape or (self.length,)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "offset": self.offset,
            "length": self.length,
            "shape": list(self.view_shape),
        }


def _validate_partition(partition: Sequence[Segment], size: int) -> None:
    cursor = 0
    names = set()
    for segment in partition:
        if segment.offset != cursor:
            raise InvalidPartition(
                f"segment {segment.name!r} starts at {segment.offset}, expected {cursor}"
            )
        if segment.length <= 0:
            raise InvalidPartition(f"segment {segment.name!r} is empty")
        if segment.shape and math.prod(segment.shape) != segment.length:
            raise InvalidPartition(
                f"segment {segment.name!r} shape {segment.shape} does not hold {segment.length} entries"
            )
        if segment.name in names:
            raise InvalidPartition(f"duplicate segment name {segment.name!r}")
        names.add(segment.name)
        cursor = segment.stop
    if cursor != size:
        raise InvalidPartition(f"partition covers [0, {cursor}) but the vector has {size} entries")


@dataclass(frozen=True, eq=False)
class ParamVec:
    """Read-only flat parameter vector W with a named partition map."""

    data: np.ndarray
    partition: Tuple[Segment, ...] = ()

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=float)
        if data.ndim != 1:
            raise ShapeMismatch(f"parameters must be a flat vector, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteParameters("parameter vector contains NaN or Inf")
        partition = tuple(self.partition) or (Segment("all", 0, data.size),)
        _validate_partition(partition, data.size)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "partition", partition)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Tuple[str, ArrayLike]]) -> "ParamVec":
        """Flatten named blocks (vectors or matrices) into one vector."""
        segments: List[Segment] = []
        pieces: List[np.ndarray] = []
        offset = 0
        for name, block in blocks:
            array = np.asarray(block, dtype=float)
            shape = tuple(array.shape) if array.ndim > 1 else ()
            segments.append(Segment(name, offset, array.size, shape))
            pieces.append(array.ravel())
            offset += array.size
        data = np.concatenate(pieces) if pieces else np.zeros(0)
        return cls(data, tuple(segments))

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def names(self) -> List[str]:
        return [segment.name for segment in self.partition]

    def segment(self, name: str) -> Segment:
        for segment in self.partition:
            if segment.name == name:
                return segment
        raise KeyError(name)

    def block(self, name: str) -> np.ndarray:
        """Read-only view of one segment in its recorded shape."""
        segment = self.segment(name)
        return self.data[segment.offset:segment.stop].reshape(segment.view_shape)

    def blocks(self) -> List[np.ndarray]:
        return [
            self.data[s.offset:s.stop].reshape(s.view_shape) for s in self.partition
        ]

    def with_data(self, values: ArrayLike) -> "ParamVec":
        """Copy-and-update: same partition, new entries."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.data.shape:
            raise ShapeMismatch(f"expected {self.data.shape} entries, got {values.shape}")
        return ParamVec(values, self.partition)

    def scaled(self, factor: float) -> "ParamVec":
        return self.with_data(factor * self.data)

    def unit(self) -> np.ndarray:
        """W / ||W|| as a plain array."""
        length = norm(self)
        if length == 0.0:
            raise ZeroNorm("cannot normalize the zero parameter vector")
        return self.data / length

    def to_dict(self) -> dict:
        return {
            "data": self.data.tolist(),
            "partition": [segment.to_dict() for segment in self.partition],
        }


@dataclass(frozen=True, eq=False)
class RadialSpherical:
    """Split of a gradient-like vector along W~ and orthogonal to it."""

    radial: np.ndarray
    spherical: np.ndarray

    @property
    def radial_norm(self) -> float:
        return norm(self.radial)

    @property
    def spherical_norm(self) -> float:
        return norm(self.spherical)


def as_array(value: Union[ParamVec, ArrayLike]) -> np.ndarray:
    if isinstance(value, ParamVec):
        return value.data
    return np.asarray(value, dtype=float)


def inner(a: Union[ParamVec, ArrayLike], b: Union[ParamVec, ArrayLike]) -> float:
    """Inner product with exactly rounded accumulation."""
    left, right = as_array(a), as_array(b)
    if left.shape != right.shape:
        raise ShapeMismatch(f"inner product of shapes {left.shape} and {right.shape}")
    return math.fsum(np.multiply(left, right).ravel())


def norm(W: Union[ParamVec, ArrayLike]) -> float:
    """Euclidean (Frobenius) norm of the flat vector."""
    values = as_array(W).ravel()
    if values.size == 0:
        return 0.0
    scale = float(np.max(np.abs(values)))
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    scaled = values / scale
    return scale * math.sqrt(math.fsum(scaled * scaled))


def decompose(g: ArrayLike, W: Union[ParamVec, ArrayLike]) -> RadialSpherical:
    """Split ``g`` into <g, W~> W~ and the remainder."""
    weights = as_array(W)
    gradient = as_array(g)
    if gradient.shape != weights.shape:
        raise ShapeMismatch(f"gradient has shape {gradient.shape}, parameters {weights.shape}")
    length = norm(weights)
    if length == 0.0:
        raise ZeroNorm("radial/spherical split needs ||W|| > 0")
    direction = weights / length
    radial = inner(gradient, direction) * direction
    return RadialSpherical(radial=radial, spherical=gradient - radial)


def partition_shares(W: ParamVec, L: float, partition: Optional[Sequence[Segment]] = None) -> np.ndarray:
    """Per-segment shares ||U_j||^L / ||W||^L."""
    if L <= 0:
        raise ValueError(f"degree must be positive, got {L}")
    length = norm(W)
    if length == 0.0:
        raise ZeroNorm("shares need ||W|| > 0")
    segments = partition if partition is not None else W.partition
    ratios = np.array([norm(W.data[s.offset:s.stop]) / length for s in segments])
    return ratios ** L
