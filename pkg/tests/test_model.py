import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voxstream import (Aabb, CombineOp, Component, ContractError, ScalarType, VoxelGrid,
                       aabb_contains, aabb_volume, combine_all, linear_index)
from voxstream.functions import Constant
from voxstream.model import slice_counts, to_scalar

from conftest import boxes_in, grids


def test_linear_index_examples():
    g = VoxelGrid(4, 3, 2)
    assert linear_index((0, 0, 0), g) == 0
    assert linear_index((3, 0, 0), g) == 3
    assert linear_index((0, 1, 0), g) == 4
    assert linear_index((3, 2, 1), g) == 23
    with pytest.raises(ContractError):
        linear_index((4, 0, 0), g)
    with pytest.raises(ContractError):
        linear_index((0, 0, -1), g)


@pytest.mark.parametrize("dims", [(1, 1, 1), (16, 16, 16), (5, 7, 3), (16, 1, 9)])
def test_linear_index_bijection(dims):
    g = VoxelGrid(*dims)
    idx = [linear_index(p, g) for p in itertools.product(*(range(d) for d in dims))]
    assert sorted(idx) == list(range(g.size))


def test_grid_rejects_bad_extents():
    with pytest.raises(ContractError):
        VoxelGrid(0, 4, 4)
    with pytest.raises(ContractError):
        VoxelGrid(2 ** 22, 2 ** 22, 2 ** 22)
    with pytest.raises(ContractError):
        VoxelGrid(2.5, 1, 1)


def test_grid_shape_and_bytes():
    g = VoxelGrid(4, 3, 2, scalar="f32")
    assert g.shape == (2, 3, 4)
    assert g.size == 24
    assert g.nbytes == 96
    assert g.with_scalar("u8").nbytes == 24


def test_aabb_inclusive_volume():
    assert aabb_volume(Aabb.from_corners((3, 3, 3), (3, 3, 3))) == 1
    assert aabb_volume(Aabb.from_corners((0, 0, 0), (1, 2, 3))) == 24
    with pytest.raises(ContractError):
        Aabb.from_corners((2, 0, 0), (1, 0, 0))


@given(st.data())
def test_volume_equals_containment_count(data):
    g = data.draw(grids(max_side=7))
    box = data.draw(boxes_in(g))
    inside = sum(aabb_contains(box, p) for p in itertools.product(*(range(d) for d in g.dims)))
    assert inside == aabb_volume(box)
    assert sorted(box.voxels()) == sorted(
        p for p in itertools.product(*(range(d) for d in g.dims)) if aabb_contains(box, p))


def test_combine_examples():
    assert combine_all(CombineOp.sum(), []) == 0
    assert combine_all(CombineOp.sum(), [3, 4, 5]) == 12
    assert combine_all(CombineOp.max("u8"), [7, 200, 13]) == 200
    assert combine_all(CombineOp.max("f32"), []) == -math.inf


def test_integer_sum_saturates():
    assert combine_all(CombineOp.sum("u8"), [200, 100]) == 255
    assert combine_all(CombineOp.sum("u32"), [4294967295.0, 1]) == 4294967295.0


def test_float_sum_rounds_each_step():
    op = CombineOp.sum("f32")
    a = float(np.float32(1.0))
    b = float(np.float32(1e-8))
    assert combine_all(op, [a, b]) == 1.0
    assert combine_all(op, [0.1, 0.2]) == float(np.float32(np.float32(0.1) + np.float32(0.2)))


def test_to_scalar_rounding():
    u8 = ScalarType.U8
    assert to_scalar(2.5, u8) == 3.0
    assert to_scalar(2.4999, u8) == 2.0
    assert to_scalar(-0.4, u8) == 0.0
    assert to_scalar(-7, u8) == 0.0
    assert to_scalar(255.6, u8) == 255.0
    assert to_scalar(0.1, ScalarType.F32) == float(np.float32(0.1))
    assert to_scalar(1e10, ScalarType.U32) == 4294967295.0


@given(st.lists(st.integers(0, 1000), max_size=30), st.randoms())
def test_integer_sum_permutation_invariant(values, rnd):
    op = CombineOp.sum("u32")
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert combine_all(op, values) == combine_all(op, shuffled)


def test_float_sum_permutation_within_tolerance(rng):
    op = CombineOp.sum("f32")
    vals = [float(v) for v in rng.random(10_000).astype(np.float32)]
    a = combine_all(op, vals)
    b = combine_all(op, list(rng.permutation(vals)))
    assert abs(a - b) <= 1e-5 * abs(a)


@given(st.sampled_from(["u8", "u32", "f32"]), st.sampled_from(["sum", "max"]), st.data())
def test_identity_law(scalar, name, data):
    op = CombineOp.parse(name, scalar)
    if scalar == "f32":
        x = float(np.float32(data.draw(st.floats(-1e6, 1e6, allow_nan=False))))
    else:
        x = float(data.draw(st.integers(0, int(op.scalar.max_value))))
    assert combine_all(op, [x]) == x


def test_component_rejects_negative_id():
    with pytest.raises(ContractError):
        Component(-1, Aabb.from_corners((0, 0, 0), (0, 0, 0)), Constant(1.0))


def test_slice_counts():
    boxes = np.array([[0, 0, 0, 1, 1, 2], [0, 0, 2, 0, 0, 4]], dtype=np.int64)
    assert slice_counts(boxes, 6).tolist() == [1, 1, 2, 1, 1, 0]
    assert slice_counts(np.zeros((0, 6), dtype=np.int64), 3).tolist() == [0, 0, 0]
