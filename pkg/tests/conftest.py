import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from voxstream import Aabb, CombineOp, Component, VoxelGrid
from voxstream.functions import Constant

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SCALARS = ("u8", "u32", "f32")
OPS = ("sum", "max")


@st.composite
def grids(draw, max_side=12, scalar=None):
    dims = [draw(st.integers(1, max_side)) for _ in range(3)]
    sc = scalar or draw(st.sampled_from(SCALARS))
    return VoxelGrid(*dims, scalar=sc)


@st.composite
def boxes_in(draw, grid):
    lo, hi = [], []
    for d in grid.dims:
        a = draw(st.integers(0, d - 1))
        b = draw(st.integers(a, d - 1))
        lo.append(a)
        hi.append(b)
    return Aabb.from_corners(lo, hi)


@st.composite
def constant_sets(draw, grid, max_n=12):
    """Constant components with shuffled, non-contiguous ids."""
    n = draw(st.integers(0, max_n))
    ids = draw(st.lists(st.integers(0, 10 * max_n + 10), min_size=n, max_size=n, unique=True))
    if grid.scalar.is_float:
        vals = st.floats(-2.0, 2.0, allow_nan=False, width=32)
    else:
        vals = st.integers(0, 300)
    return [Component(i, draw(boxes_in(grid)), Constant(float(draw(vals)))) for i in ids]


def random_constant_set(rng, grid, n):
    comps = []
    for i in range(n):
        lo = [int(rng.integers(0, d)) for d in grid.dims]
        hi = [int(rng.integers(a, d)) for a, d in zip(lo, grid.dims)]
        v = float(np.float32(rng.random())) if grid.scalar.is_float else float(rng.integers(1, 256))
        comps.append(Component(i, Aabb.from_corners(lo, hi), Constant(v)))
    return comps


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def ops_for(scalar):
    return [CombineOp.parse(o, scalar) for o in OPS]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
