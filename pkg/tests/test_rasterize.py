import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voxstream import (Aabb, CombineOp, Component, ContractError, VoxelGrid, aabb_contains,
                       combine_all, linear_index, rasterize, rasterize_bruteforce,
                       rasterize_component_order, rasterize_nested_sweeps, rasterize_spatial_index)
from voxstream.functions import Constant, Ramp, SphericalShadow, Capsule, pack_components
from voxstream.model import to_scalar
from voxstream.rasterize import METHODS, NestedSweeps
from voxstream.reference import nested_sweeps_slices
from voxstream.sinks import MemSink, NullSink, VoxelSink

from conftest import SCALARS, constant_sets, grids, random_constant_set


def volume(method, comps, grid, op):
    sink = MemSink()
    rasterize(method, comps, grid, op, sink)
    return sink.volume


def oracle(comps, grid, op):
    """Direct evaluation of the definition, voxel by voxel."""
    out = np.empty(grid.shape, dtype=grid.scalar.dtype)
    ordered = sorted(comps, key=lambda c: c.id)
    for x, y, z in itertools.product(*(range(d) for d in grid.dims)):
        vals = [to_scalar(c.value_fn(x, y, z), grid.scalar) for c in ordered
                if aabb_contains(c.bbox, (x, y, z))]
        out[z, y, x] = combine_all(op, vals)
    return out


class LineRecorder(VoxelSink):
    """Test double: records every call and checks the order itself."""

    def __init__(self):
        self.calls = []
        self.grid = None
        self.finished = 0

    def begin(self, grid):
        self.grid = grid

    def accept_line(self, z, y, values):
        self.calls.append((z, y, len(values)))

    def finish(self):
        self.finished += 1

    def abort(self):
        pass


# -- small fixed scenarios ------------------------------------------------------

@pytest.mark.parametrize("method", METHODS)
def test_empty_set_gives_identity(method):
    g = VoxelGrid(2, 2, 2)
    assert volume(method, [], g, CombineOp.sum()).tolist() == np.zeros((2, 2, 2)).tolist()
    gf = g.with_scalar("f32")
    assert np.all(volume(method, [], gf, CombineOp.max("f32")) == -np.inf)


@pytest.mark.parametrize("method", METHODS)
def test_full_grid_constant_max(method):
    g = VoxelGrid(4, 3, 5)
    comps = [Component(0, g.full_box(), Constant(5))]
    assert np.all(volume(method, comps, g, CombineOp.max()) == 5)


@pytest.mark.parametrize("method", METHODS)
def test_two_overlapping_boxes(method):
    g = VoxelGrid(8, 6, 5)
    a = Component(0, Aabb.from_corners((0, 0, 0), (4, 3, 2)), Constant(10))
    b = Component(1, Aabb.from_corners((3, 2, 1), (7, 5, 4)), Constant(7))
    vol = volume(method, [a, b], g, CombineOp.sum())
    for x, y, z in itertools.product(range(8), range(6), range(5)):
        ina, inb = aabb_contains(a.bbox, (x, y, z)), aabb_contains(b.bbox, (x, y, z))
        assert vol[z, y, x] == 10 * ina + 7 * inb


@pytest.mark.parametrize("method", METHODS)
def test_coverage_count(method, rng):
    g = VoxelGrid(10, 9, 8, scalar="u32")
    comps = [Component(c.id, c.bbox, Constant(1.0)) for c in random_constant_set(rng, g, 40)]
    vol = volume(method, comps, g, CombineOp.sum("u32"))
    for x, y, z in itertools.product(*(range(d) for d in g.dims)):
        assert vol[z, y, x] == sum(aabb_contains(c.bbox, (x, y, z)) for c in comps)


@pytest.mark.parametrize("method", METHODS)
def test_mixed_value_functions_match_definition(method):
    g = VoxelGrid(14, 12, 10, scalar="f32")
    comps = [
        Component(4, Aabb.from_corners((0, 0, 0), (13, 11, 9)), Ramp(0.1, 0.2, -0.3, 0.05)),
        Component(2, Aabb.from_corners((2, 1, 1), (11, 10, 8)),
                  Capsule((3, 2, 2), (10, 9, 7), 2.5, 3.0, 0.0)),
        Component(9, Aabb.from_corners((4, 4, 4), (12, 11, 9)), SphericalShadow((8, 7, 6), 4.0, 0.5)),
    ]
    for name in ("sum", "max"):
        op = CombineOp.parse(name, "f32")
        assert np.array_equal(volume(method, comps, g, op), oracle(comps, g, op))


def test_ramp_saturates_and_rounds():
    g = VoxelGrid(30, 1, 1)
    comps = [Component(0, g.full_box(), Ramp(-5.5, 10.0))]
    vol = volume("nested-sweeps", comps, g, CombineOp.sum())[0, 0]
    expected = [min(255, max(0, int(np.floor(-5.5 + 10 * x + 0.5)))) for x in range(30)]
    assert vol.tolist() == expected


def test_python_callable_uses_reference_path():
    g = VoxelGrid(6, 5, 4)
    fn = lambda x, y, z: x + 2 * y + 3 * z  # noqa: E731
    comps = [Component(1, Aabb.from_corners((1, 0, 0), (5, 4, 3)), fn),
             Component(0, Aabb.from_corners((0, 1, 1), (3, 4, 2)), Constant(4))]
    compiled = [Component(1, comps[0].bbox, Ramp(0, 1, 2, 3)), comps[1]]
    op = CombineOp.sum()
    for method in METHODS:
        assert np.array_equal(volume(method, comps, g, op), volume(method, compiled, g, op))


# -- randomized equivalence -------------------------------------------------------

@given(st.data())
def test_all_methods_match_definition(data):
    g = data.draw(grids(max_side=9))
    comps = data.draw(constant_sets(g, max_n=10))
    op = CombineOp.parse(data.draw(st.sampled_from(["sum", "max"])), g.scalar)
    want = oracle(comps, g, op)
    for method in ("bruteforce", "spatial-index", "nested-sweeps", "component-order"):
        assert np.array_equal(volume(method, comps, g, op), want), method


@given(st.data())
def test_sorted_component_order_integer_exact(data):
    g = data.draw(grids(max_side=10, scalar=data.draw(st.sampled_from(["u8", "u32"]))))
    comps = data.draw(constant_sets(g, max_n=15))
    op = CombineOp.parse(data.draw(st.sampled_from(["sum", "max"])), g.scalar)
    assert np.array_equal(volume("component-order-sorted", comps, g, op),
                          volume("bruteforce", comps, g, op))


def test_sorted_vs_unsorted_u32_fifty_components(rng):
    g = VoxelGrid(20, 18, 16, scalar="u32")
    comps = random_constant_set(rng, g, 50)
    op = CombineOp.sum("u32")
    a = rasterize_component_order(comps, g, op, sorted=False)
    b = rasterize_component_order(comps, g, op, sorted=True)
    assert np.array_equal(a, b)
    assert np.array_equal(a, volume("bruteforce", comps, g, op))


@pytest.mark.parametrize("scalar", SCALARS)
def test_compiled_matches_reference_paths(scalar, rng):
    from voxstream import reference
    g = VoxelGrid(9, 8, 7, scalar=scalar)
    comps = random_constant_set(rng, g, 25)
    for op in (CombineOp.sum(scalar), CombineOp.max(scalar)):
        ref = np.stack([p.copy() for _, p, _ in nested_sweeps_slices(comps, g, op)])
        assert np.array_equal(volume("nested-sweeps", comps, g, op), ref)
        ref = np.stack([p.copy() for _, p in reference.spatial_index_slices(comps, g, op)])
        assert np.array_equal(volume("spatial-index", comps, g, op), ref)
        assert np.array_equal(reference.component_order(comps, g, op),
                              rasterize_component_order(comps, g, op))


def test_component_order_on_memmap(tmp_path, rng):
    g = VoxelGrid(16, 16, 16)
    comps = random_constant_set(rng, g, 30)
    op = CombineOp.sum()
    sink = MemSink()
    rasterize("component-order-sorted", comps, g, op, sink, buffer_path=tmp_path / "buf")
    assert np.array_equal(sink.volume, volume("bruteforce", comps, g, op))
    assert (tmp_path / "buf").stat().st_size == g.size


# -- streaming contract -----------------------------------------------------------

@pytest.mark.parametrize("method", ["bruteforce", "spatial-index", "nested-sweeps"])
def test_lines_in_linear_order(method, rng):
    g = VoxelGrid(7, 5, 4)
    rec = LineRecorder()
    rasterize(method, random_constant_set(rng, g, 10), g, CombineOp.sum(), rec)
    assert rec.calls == [(z, y, 7) for z in range(4) for y in range(5)]
    assert rec.finished == 1


# -- nested-sweeps instrumentation -------------------------------------------------

def test_queue_and_active_sets_mid_line():
    g = VoxelGrid(8, 8, 4)
    comps = [
        Component(1, Aabb.from_corners((0, 0, 0), (2, 7, 1)), Constant(1)),
        Component(2, Aabb.from_corners((3, 2, 0), (5, 4, 2)), Constant(2)),
        Component(3, Aabb.from_corners((6, 3, 0), (7, 5, 3)), Constant(4)),
        Component(4, Aabb.from_corners((0, 0, 2), (7, 7, 3)), Constant(8)),
    ]
    states = {}
    planes = [p.copy() for _, p, _ in nested_sweeps_slices(
        comps, g, CombineOp.sum(), observer=lambda s: states.setdefault(s.p, s))]
    s = states[(4, 3, 0)]
    assert s.queue_z == (4,)
    assert sorted(s.active_z) == [1, 2, 3]
    assert s.queue_y == ()
    assert sorted(s.active_y) == [1, 2, 3]
    assert s.queue_x == (3,)
    assert s.active_x == (2,)
    assert planes[0][3, 4] == 2
    # every voxel: C_x is exactly the containment set, in id order
    for p, st_ in states.items():
        assert st_.active_x == tuple(c.id for c in comps if aabb_contains(c.bbox, p))


def test_compiled_trace_equals_containment(rng):
    g = VoxelGrid(12, 11, 10)
    comps = random_constant_set(rng, g, 30)
    st_ = rasterize_nested_sweeps(comps, g, CombineOp.sum(), NullSink(), trace=True)
    got = {}
    for v, c in zip(st_.trace_voxel.tolist(), st_.trace_component.tolist()):
        got.setdefault(v, []).append(c)
    for p in itertools.product(*(range(d) for d in g.dims)):
        want = [c.id for c in comps if aabb_contains(c.bbox, p)]
        assert sorted(got.get(linear_index(p, g), [])) == want


def test_single_full_component_stats():
    g = VoxelGrid(5, 4, 3)
    st_ = rasterize_nested_sweeps([Component(0, g.full_box(), Constant(1))], g, CombineOp.sum(),
                                  NullSink(), collect_stats=True)
    assert st_.per_slice_active.tolist() == [1, 1, 1]
    assert np.all(st_.per_line_active == 1)


@given(st.data())
def test_stats_law(data):
    g = data.draw(grids(max_side=10))
    comps = data.draw(constant_sets(g, max_n=20))
    st_ = rasterize_nested_sweeps(comps, g, CombineOp.sum(g.scalar), NullSink(), collect_stats=True)
    S, L = st_.per_slice_active, st_.per_line_active
    assert int(S.sum()) == sum(c.bbox.hi_z - c.bbox.lo_z + 1 for c in comps)
    assert np.all(L <= S[:, None]) and np.all(S <= len(comps))
    for z, y in itertools.product(range(g.dz), range(g.dy)):
        assert L[z, y] == sum(c.bbox.lo_z <= z <= c.bbox.hi_z and c.bbox.lo_y <= y <= c.bbox.hi_y
                              for c in comps)
    ref = rasterize_bruteforce(comps, g, CombineOp.sum(g.scalar), NullSink())
    assert np.array_equal(ref.per_slice_active, S)


def test_eval_counts_equal_box_volumes(rng):
    g = VoxelGrid(20, 17, 15)
    comps = random_constant_set(rng, g, 60)
    packed = pack_components(comps, g)
    st_ = rasterize_nested_sweeps(comps, g, CombineOp.sum(), NullSink(), count_evals=True)
    assert np.array_equal(st_.eval_counts, packed.volumes)
    from voxstream.model import SweepStats
    holder = SweepStats(np.zeros(0))
    rasterize_component_order(comps, g, CombineOp.sum(), count_evals=True, stats=holder)
    assert np.array_equal(holder.eval_counts, packed.volumes)


def test_python_counting_functions(rng):
    g = VoxelGrid(9, 8, 7)
    base = random_constant_set(rng, g, 15)
    counts = {c.id: 0 for c in base}

    def counting(i):
        def f(x, y, z):
            counts[i] += 1
            return 1.0
        return f

    comps = [Component(c.id, c.bbox, counting(c.id)) for c in base]
    rasterize_nested_sweeps(comps, g, CombineOp.sum(), NullSink())
    assert counts == {c.id: c.bbox.sides[0] * c.bbox.sides[1] * c.bbox.sides[2] for c in base}


# -- errors -------------------------------------------------------------------------

@pytest.mark.parametrize("method", METHODS)
def test_box_outside_grid_rejected(method):
    g = VoxelGrid(4, 4, 4)
    comps = [Component(0, Aabb.from_corners((0, 0, 0), (4, 1, 1)), Constant(1))]
    with pytest.raises(ContractError):
        rasterize(method, comps, g, CombineOp.sum(), NullSink())


def test_op_scalar_mismatch_and_unknown_method():
    g = VoxelGrid(2, 2, 2)
    with pytest.raises(ContractError):
        rasterize("nested-sweeps", [], g, CombineOp.sum("f32"), NullSink())
    with pytest.raises(ValueError):
        rasterize("octree", [], g, CombineOp.sum(), NullSink())


def test_nested_slices_reuse_one_plane(rng):
    g = VoxelGrid(6, 6, 6)
    packed = pack_components(random_constant_set(rng, g, 5), g)
    planes = {id(p) for _, p in NestedSweeps(packed, g, CombineOp.sum()).slices()}
    assert len(planes) == 1
