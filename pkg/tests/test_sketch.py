import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cadfit.config import FitConfig
from cadfit.geometry import Loop3D, Plane, box_mesh
from cadfit.metrics import mesh_target
from cadfit.polygon import resample_closed
from cadfit.sketch import (
    Arc,
    Circle,
    LineSegment,
    Loop2D,
    extract_loops,
    extract_sketch_candidates,
    fit_primitives,
    group_profiles,
)

from conftest import rect
from oracles import winding_number
from test_geometry import sphere_mesh

XY = Plane.make([0, 0, 0], [0, 0, 1], [1, 0, 0])


def lift(pts2: np.ndarray, z: float = 0.0) -> Loop3D:
    return Loop3D(np.column_stack([pts2, np.full(len(pts2), z)]))


def circle_pts(r: float, n: int = 400, c=(0.0, 0.0)) -> np.ndarray:
    a = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([c[0] + r * np.cos(a), c[1] + r * np.sin(a)])


def rounded_rect(w: float, h: float, r: float, n_arc: int = 40) -> np.ndarray:
    pts = []
    for cx, cy, a0 in ((w / 2 - r, h / 2 - r, 0.0), (-w / 2 + r, h / 2 - r, np.pi / 2), (-w / 2 + r, -h / 2 + r, np.pi), (w / 2 - r, -h / 2 + r, 1.5 * np.pi)):
        a = a0 + np.linspace(0, np.pi / 2, n_arc)
        pts.append(np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)]))
    return np.concatenate(pts)


def chain_deviation(chain, src: np.ndarray) -> float:
    """Largest distance from densely sampled chain points to the source polygon."""
    samples = chain.sample(200)
    a, b = src, np.roll(src, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ijk,jk->ij", samples[:, None, :] - a[None], ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    proj = a[None] + t[..., None] * ab[None]
    return float(np.linalg.norm(samples[:, None, :] - proj, axis=2).min(axis=1).max())


# ------------------------------------------------------------ extract_loops


def test_square_section_area():
    loops = extract_loops([lift(rect(-0.5, -0.5, 0.5, 0.5))], XY, FitConfig())
    assert len(loops) == 1 and len(loops[0].points) == 128
    assert abs(abs(loops[0].signed_area) - 1.0) < 1e-3


def test_tiny_loop_dropped():
    s = 1e-4
    stats = {}
    assert extract_loops([lift(rect(0, 0, s, s))], XY, FitConfig(), stats) == []
    assert stats["dropped"] == 1


def test_circle_perimeter():
    loops = extract_loops([lift(circle_pts(0.5))], XY, FitConfig())
    assert abs(loops[0].perimeter - np.pi) / np.pi < 0.005


# ---------------------------------------------------------- group_profiles


def L(pts):
    return Loop2D(pts)


def test_square_with_hole():
    profs = group_profiles([L(rect(-1, -1, 1, 1)), L(rect(-0.5, -0.5, 0.5, 0.5))], XY)
    assert len(profs) == 1 and len(profs[0].holes) == 1
    assert profs[0].outer.signed_area > 0 and profs[0].holes[0].signed_area < 0
    assert profs[0].area == pytest.approx(3.0)


def test_two_disjoint_squares():
    profs = group_profiles([L(rect(0, 0, 1, 1)), L(rect(2, 0, 3, 1))], XY)
    assert len(profs) == 2 and all(not p.holes for p in profs)


def test_three_nested_squares():
    loops = [L(rect(-0.25, -0.25, 0.25, 0.25)), L(rect(-1, -1, 1, 1)), L(rect(-0.5, -0.5, 0.5, 0.5))]
    profs = sorted(group_profiles(loops, XY), key=lambda p: -p.area)
    assert len(profs) == 2
    assert abs(profs[0].outer.signed_area) == pytest.approx(4.0) and len(profs[0].holes) == 1
    assert abs(profs[0].holes[0].signed_area) == pytest.approx(1.0)
    assert abs(profs[1].outer.signed_area) == pytest.approx(0.25) and not profs[1].holes


squares = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 2.0))


@given(st.lists(squares, min_size=1, max_size=6))
def test_grouping_partitions_loops(specs):
    loops = [L(rect(x, y, x + s, y + s)) for x, y, s in specs]
    profs = group_profiles(loops, XY)
    used = [id(p.outer) for p in profs] + [id(h) for p in profs for h in p.holes]
    assert len(used) == len(set(used))
    for p in profs:
        assert p.outer.signed_area > 0
        for h in p.holes:
            assert h.signed_area < 0
            assert np.mean(winding_number(h.points, p.outer.points) != 0) >= 0.95
    # a loop never lands in two profiles and no loop is invented
    assert len(used) <= len(loops)


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=6, unique=True))
def test_concentric_nesting_keeps_every_loop(sizes):
    sizes = sorted(sizes)
    if any(b - a < 0.02 for a, b in zip(sizes, sizes[1:])):
        return
    loops = [L(rect(-s, -s, s, s)) for s in sizes]
    profs = group_profiles(loops, XY)
    assert len(profs) == (len(sizes) + 1) // 2
    assert sum(1 + len(p.holes) for p in profs) == len(sizes)
    for p in profs:
        for h in p.holes:
            assert np.all(winding_number(h.points, p.outer.points) != 0)


# ---------------------------------------------------------- fit_primitives


def test_square_fits_four_lines():
    ch = fit_primitives(Loop2D(resample_closed(rect(-0.5, -0.5, 0.5, 0.5), 128)), 0.01)
    assert len(ch.elements) == 4
    assert all(isinstance(e, LineSegment) for e in ch.elements)
    corners = sorted(tuple(np.round(e.p0, 9)) for e in ch.elements)
    assert corners == [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]


def test_circle_fit_radius():
    ch = fit_primitives(Loop2D(resample_closed(circle_pts(0.4, 64), 128)), 0.01)
    assert len(ch.elements) == 1 and isinstance(ch.elements[0], Circle)
    assert abs(ch.elements[0].radius - 0.4) < 1e-3


def test_rounded_rectangle_alternates():
    ch = fit_primitives(Loop2D(resample_closed(rounded_rect(1.6, 1.0, 0.2), 128)), 0.01)
    kinds = [type(e).__name__ for e in ch.elements]
    assert kinds.count("LineSegment") == 4 and kinds.count("Arc") == 4
    assert all(kinds[k] != kinds[(k + 1) % 8] for k in range(8))
    for e in ch.elements:
        if isinstance(e, Arc):
            assert e.radius == pytest.approx(0.2, abs=0.01)


def _shape(kind, a, b, r, rot):
    if kind == "circle":
        pts = circle_pts(a / 2, 300)
    elif kind == "rect":
        pts = resample_closed(rect(-a / 2, -b / 2, a / 2, b / 2), 400)
    else:
        pts = rounded_rect(a, b, r * min(a, b) / 2)
    c, s = math.cos(rot), math.sin(rot)
    return pts @ np.array([[c, s], [-s, c]])


shapes = st.tuples(
    st.sampled_from(["circle", "rect", "rounded"]),
    st.floats(0.3, 2.0),
    st.floats(0.3, 2.0),
    st.floats(0.2, 0.8),
    st.floats(0, 2 * np.pi),
)


@given(shapes, st.sampled_from([0.005, 0.01, 0.02]))
def test_chain_deviation_within_tolerance(shape, tol):
    src = resample_closed(_shape(*shape), 128)
    ch = fit_primitives(Loop2D(src), tol)
    diam = float(np.linalg.norm(src.max(axis=0) - src.min(axis=0)))
    assert chain_deviation(ch, src) <= tol * diam + 1e-9
    ends = [(e.start, e.end) for e in ch.elements]
    for k in range(len(ends)):
        assert np.linalg.norm(ends[k][1] - ends[(k + 1) % len(ends)][0]) <= tol * diam


def _params(chain) -> list[np.ndarray]:
    out = []
    for e in chain.elements:
        if isinstance(e, LineSegment):
            out.append(("line", np.concatenate([e.p0, e.p1])))
        else:
            out.append((type(e).__name__, np.concatenate([e.center, [e.radius]])))
    return out


@given(shapes)
def test_refit_is_idempotent(shape):
    src = resample_closed(_shape(*shape), 128)
    ch = fit_primitives(Loop2D(src), 0.01)
    # rebuild the loop from points exactly on the fitted elements
    rebuilt = np.concatenate([e.sample(33)[:-1] for e in ch.elements])
    again = fit_primitives(Loop2D(rebuilt), 0.01)
    assert again.counts() == ch.counts()
    a, b = _params(ch), _params(again)
    for ka, pa in a:
        assert min(np.abs(pa - pb).max() for kb, pb in b if kb == ka) < 1e-6


# ------------------------------------------------- extract_sketch_candidates


def test_cube_candidates_include_unit_square(cube):
    profs = extract_sketch_candidates(mesh_target(cube), FitConfig())
    assert any(abs(p.area - 1.0) < 1e-3 and not p.holes for p in profs)
    keys = [p.key() for p in profs]
    assert keys == sorted(keys)


def test_sphere_candidates_are_round():
    profs = extract_sketch_candidates(mesh_target(sphere_mesh(1500)), FitConfig())
    assert profs
    for p in profs:
        pts = p.outer.points
        r = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
        assert r.std() / r.mean() < 0.03


def test_empty_intersection_gives_no_profiles(cube):
    t = mesh_target(cube)
    t._slicer = lambda plane: []
    assert extract_sketch_candidates(t, FitConfig()) == []
