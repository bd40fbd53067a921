"""Parameter vectors, partitions and the radial/spherical split."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from homoflow.errors import InvalidPartition, NonFiniteParameters, ShapeMismatch, ZeroNorm  # pylint: disable=import-error
from homoflow.params import ParamVec, Segment, decompose, inner, norm, partition_shares  # pylint: disable=import-error


@pytest.mark.parametrize(
    ("values", "expected"),
    [((3.0, 4.0), 5.0), ((0.0, 0.0, 0.0), 0.0), ((1.0, 1.0, 1.0, 1.0), 2.0)],
)
def test_norm_examples(values, expected) -> None:
    assert norm(ParamVec(values)) == pytest.approx(expected, abs=1e-15)


def test_norm_survives_huge_entries() -> None:
    assert norm([1e200, 1e200]) == pytest.approx(math.sqrt(2.0) * 1e200, rel=1e-15)


def test_decompose_parallel_and_orthogonal() -> None:
    parallel = decompose([1.0, 0.0], ParamVec([1.0, 0.0]))
    assert np.allclose(parallel.radial, [1.0, 0.0])
    assert np.allclose(parallel.spherical, [0.0, 0.0])

    orthogonal = decompose([0.0, 1.0], ParamVec([1.0, 0.0]))
    assert np.allclose(orthogonal.radial, [0.0, 0.0])
    assert np.allclose(orthogonal.spherical, [0.0, 1.0])


def test_decompose_hand_computed() -> None:
    split = decompose([1.0, 0.0], ParamVec([3.0, 4.0]))
    assert np.allclose(split.radial, [0.36, 0.48], atol=1e-15)
    assert np.allclose(split.spherical, [0.64, -0.48], atol=1e-15)


def test_decompose_needs_nonzero_w() -> None:
    with pytest.raises(ZeroNorm):
        decompose([1.0, 2.0], ParamVec([0.0, 0.0]))


def test_decompose_rejects_length_mismatch() -> None:
    with pytest.raises(ShapeMismatch):
        decompose([1.0, 2.0, 3.0], ParamVec([1.0, 0.0]))


_finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


@st.composite
def _pairs(draw):
    size = draw(st.integers(min_value=2, max_value=12))
    g = draw(arrays(np.float64, size, elements=_finite))
    w = draw(arrays(np.float64, size, elements=_finite).filter(lambda v: norm(v) > 1e-3))
    return g, w


@given(_pairs())
def test_decompose_reconstructs_and_is_orthogonal(pair) -> None:
    g, w = pair
    split = decompose(g, ParamVec(w))
    scale = max(norm(g), 1e-300)
    assert norm(split.radial + split.spherical - g) <= 1e-12 * scale
    assert abs(inner(split.radial, split.spherical)) <= 1e-12 * split.radial_norm * scale + 1e-300
    assert split.radial_norm ** 2 + split.spherical_norm ** 2 == pytest.approx(norm(g) ** 2, rel=1e-10, abs=1e-300)


def test_shares_examples() -> None:
    equal = ParamVec.from_blocks([("a", [1.0, 0.0]), ("b", [0.0, 1.0])])
    assert np.allclose(partition_shares(equal, 2.0), [0.5, 0.5])

    single = ParamVec([1.0, -2.0, 3.0])
    assert np.allclose(partition_shares(single, 2.0), [1.0])

    uneven = ParamVec.from_blocks([("a", [1.0, 0.0]), ("b", [0.0, 2.0])])
    assert np.allclose(partition_shares(uneven, 2.0), [0.2, 0.8])


@given(arrays(np.float64, 12, elements=_finite).filter(lambda v: norm(v) > 1e-3))
def test_shares_sum_to_one_for_degree_two(values) -> None:
    W = ParamVec(values, tuple(Segment(f"w{j}", 3 * j, 3) for j in range(4)))
    assert math.fsum(partition_shares(W, 2.0)) == pytest.approx(1.0, abs=1e-12)


def test_shares_need_nonzero_w() -> None:
    with pytest.raises(ZeroNorm):
        partition_shares(ParamVec([0.0, 0.0]), 2.0)


def test_partition_must_cover_vector() -> None:
    with pytest.raises(InvalidPartition):
        ParamVec([1.0, 2.0, 3.0], (Segment("a", 0, 2),))
    with pytest.raises(InvalidPartition):
        ParamVec([1.0, 2.0, 3.0], (Segment("a", 0, 2), Segment("b", 1, 2)))
    with pytest.raises(InvalidPartition):
        ParamVec([1.0, 2.0], (Segment("a", 0, 1), Segment("a", 1, 1)))


def test_non_finite_entries_are_rejected() -> None:
    with pytest.raises(NonFiniteParameters):
        ParamVec([1.0, float("nan")])


def test_param_vec_is_read_only_and_copies() -> None:
    source = np.array([1.0, 2.0])
    W = ParamVec(source)
    source[0] = 5.0
    assert W.data[0] == 1.0
    with pytest.raises(ValueError):
        W.data[0] = 3.0


def test_blocks_keep_their_shapes() -> None:
    W = ParamVec.from_blocks([("A1", np.eye(2)), ("A2", [[1.0, 0.0]])])
    assert W.names == ["A1", "A2"]
    assert W.block("A1").shape == (2, 2)
    assert W.block("A2").shape == (1, 2)
    assert W.size == 6
    assert np.array_equal(W.scaled(2.0).block("A2"), [[2.0, 0.0]])


def test_with_data_checks_shape() -> None:
    with pytest.raises(ShapeMismatch):
        ParamVec([1.0, 2.0]).with_data([1.0])
