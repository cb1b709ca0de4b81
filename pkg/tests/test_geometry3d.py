import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from stforge.geometry3d import (
    FREE,
    GeometryError,
    NoFreeCellError,
    PointCloud,
    RelationQuery,
    backproject,
    build_occupancy,
    evaluate_relation,
    fit_aabb,
    ordinal_rank,
    project,
    sample_placement,
)
from stforge.scene_core import Box2D, Box3D, CameraIntrinsics, DepthMap, Mask2D, ObjectNode, SceneGraph


def K(fx=100.0, fy=100.0, cx=50.0, cy=50.0, w=200, h=100):
    return CameraIntrinsics(fx, fy, cx, cy, w, h)


def scene_of(*nodes, rot=None, k=None):
    return SceneGraph("t", 640, 480, tuple(nodes), gravity_rotation=rot, intrinsics=k)


def node3d(nid, center, size=(0.2, 0.2, 0.2), cat="obj", box=None):
    cx, cy, cz = center
    sx, sy, sz = size
    b3 = Box3D(cx - sx / 2, cy - sy / 2, cz - sz / 2, cx + sx / 2, cy + sy / 2, cz + sz / 2)
    return ObjectNode(nid, cat, box or Box2D(0, 0, 10, 10), box3d=b3)


# -- camera --------------------------------------------------------------------

def test_principal_point_backprojects_to_axis():
    depth = np.full((100, 200), np.nan, dtype=np.float32)
    depth[50, 50] = 2.0
    pc = backproject(DepthMap.from_array(depth), K())
    assert pc.points.tolist() == [[0.0, 0.0, 2.0]]


def test_backproject_hand_computed():
    depth = np.full((100, 200), np.nan, dtype=np.float32)
    depth[50, 150] = 2.0
    pc = backproject(DepthMap.from_array(depth), K())
    # X = (150 - 50) * 2 / 100 = 2.0
    assert pc.points.tolist() == [[2.0, 0.0, 2.0]]


def test_backproject_region_and_order():
    depth = np.ones((100, 200), dtype=np.float32)
    region = np.zeros((100, 200), dtype=bool)
    region[3, 7] = region[1, 9] = region[1, 2] = True
    pc = backproject(DepthMap.from_array(depth), K(), Mask2D.from_array(region))
    us = [(p[0] * 100 + 50) for p in pc.points]
    vs = [(p[1] * 100 + 50) for p in pc.points]
    assert list(zip(np.round(us), np.round(vs))) == [(2, 1), (9, 1), (7, 3)]


def test_backproject_empty_region():
    depth = np.full((100, 200), np.nan, dtype=np.float32)
    with pytest.raises(GeometryError, match="empty region"):
        backproject(DepthMap.from_array(depth), K())


def test_project_examples():
    assert project((0, 0, 2), K()) == (50.0, 50.0)
    assert project((2, 0, 2), K()) == (150.0, 50.0)
    with pytest.raises(GeometryError):
        project((1, 1, 0), K())


@settings(max_examples=300, deadline=None)
@given(
    st.floats(50, 2000), st.floats(50, 2000),
    st.integers(16, 1920), st.integers(16, 1080),
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
    st.floats(0.05, 100),
)
def test_project_backproject_roundtrip(fx, fy, w, h, fcx, fcy, fu, fv, d):
    k = CameraIntrinsics(fx, fy, fcx * w, fcy * h, w, h)
    u, v = int(fu * (w - 1)), int(fv * (h - 1))
    x = (u - k.cx) * d / k.fx
    y = (v - k.cy) * d / k.fy
    pu, pv = project((x, y, d), k)
    assert abs(pu - u) < 1e-6 and abs(pv - v) < 1e-6


# -- boxes ---------------------------------------------------------------------

CUBE = [list(c) for c in itertools.product((0.0, 1.0), repeat=3)]


def _trim_oracle(points, q):
    """Sort each axis and read the inward-rounded order statistics."""
    n = len(points)
    lo_i = math.ceil(q * (n - 1))
    hi_i = math.floor((1 - q) * (n - 1))
    out = []
    for axis in range(3):
        s = sorted(p[axis] for p in points)
        out.append((s[lo_i], s[hi_i]))
    return out


def test_fit_unit_cube():
    b = fit_aabb(PointCloud(np.array(CUBE)), trim_quantile=0.0)
    assert b.to_list() == [0, 0, 0, 1, 1, 1]


def test_fit_trims_outlier():
    pts = CUBE + [[100.0, 0.0, 0.0]]
    assert _trim_oracle(pts, 0.1) == [(0.0, 1.0)] * 3
    b = fit_aabb(PointCloud(np.array(pts)), trim_quantile=0.1)
    assert b.to_list() == [0, 0, 0, 1, 1, 1]


def test_fit_too_few_points():
    with pytest.raises(GeometryError, match="too few points"):
        fit_aabb(PointCloud(np.array([[0, 0, 0], [1, 1, 1.0]])))


def test_fit_degenerate():
    with pytest.raises(GeometryError, match="degenerate"):
        fit_aabb(PointCloud(np.ones((5, 3))))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-10, 10)] * 3), min_size=3, max_size=40),
       st.floats(0, 0.49), st.floats(0, 0.49))
def test_fit_matches_oracle_and_is_monotone(pts, q1, q2):
    arr = np.array(pts)
    assume(np.ptp(arr, axis=0).max() > 1e-3)
    qa, qb = sorted((q1, q2))
    try:
        a = fit_aabb(PointCloud(arr), qa)
        b = fit_aabb(PointCloud(arr), qb)
    except GeometryError:
        return
    for axis, (lo, hi) in enumerate(_trim_oracle(pts, qa)):
        if hi > lo:
            assert a.to_list()[axis] == lo and a.to_list()[axis + 3] == hi
    for ea, eb in zip(a.extent, b.extent):
        assert eb <= ea + 1e-5


# -- relations -----------------------------------------------------------------

def test_left_of_by_center_x():
    sg = scene_of(node3d("a", (0, 0, 1)), node3d("b", (1, 0, 1)))
    assert evaluate_relation(sg, RelationQuery("left_of", "a", "b")).value is True
    assert evaluate_relation(sg, RelationQuery("right_of", "a", "b")).value is False


def test_distance_345():
    sg = scene_of(node3d("a", (0, 0, 1)), node3d("b", (3, 4, 1)))
    r = evaluate_relation(sg, RelationQuery("distance", "a", "b"))
    assert r.value == 5.0 and r.unit == "m"


def test_nearest_argmin():
    sg = scene_of(node3d("s", (0, 0, 0.0001)), node3d("z1", (0, 0, 1.0)),
                  node3d("z2", (0, 0, 2.0)), node3d("z3", (0, 0, 3.0)))
    r = evaluate_relation(sg, RelationQuery("nearest", "s"))
    assert r.value == "z1" and not r.tied
    assert evaluate_relation(sg, RelationQuery("farthest", "s")).value == "z3"


def test_above_uses_y_down():
    sg = scene_of(node3d("a", (0, -1, 2)), node3d("b", (0, 1, 2)))
    assert evaluate_relation(sg, RelationQuery("above", "a", "b")).value is True


def test_2d_fallback_for_left_and_3d_required_for_distance():
    sg = scene_of(ObjectNode("a", "cup", Box2D(0, 0, 10, 10)), ObjectNode("b", "cup", Box2D(20, 0, 30, 10)))
    r = evaluate_relation(sg, RelationQuery("left_of", "a", "b"))
    assert r.value is True and r.frame == "image_2d"
    from stforge.geometry3d import RelationNotApplicable
    with pytest.raises(RelationNotApplicable):
        evaluate_relation(sg, RelationQuery("distance", "a", "b"))


def test_on_top_of_and_inside():
    table = ObjectNode("t", "table", Box2D(0, 0, 10, 10), box3d=Box3D(-1, 0.2, 2, 1, 1.0, 3))
    cup = ObjectNode("c", "cup", Box2D(0, 0, 10, 10), box3d=Box3D(-0.1, 0.0, 2.4, 0.1, 0.2, 2.6))
    sg = scene_of(table, cup)
    assert evaluate_relation(sg, RelationQuery("on_top_of", "c", "t")).value is True
    assert evaluate_relation(sg, RelationQuery("on_top_of", "t", "c")).value is False


def test_direction_sector():
    sg = scene_of(node3d("a", (1, 0, 3)), node3d("b", (0, 0, 2)))
    assert evaluate_relation(sg, RelationQuery("dir_front_right", "a", "b")).value is True
    assert evaluate_relation(sg, RelationQuery("dir_back_left", "b", "a")).value is True


_coord = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=200, deadline=None)
@given(_coord, _coord, _coord, _coord, _coord, _coord)
def test_relation_antisymmetry(ax, ay, az, bx, by, bz):
    sg = scene_of(node3d("a", (ax, ay, az)), node3d("b", (bx, by, bz)))
    q = lambda c, s, o: evaluate_relation(sg, RelationQuery(c, s, o)).value  # noqa: E731
    if ax != bx:
        assert q("left_of", "a", "b") == q("right_of", "b", "a")
    if ay != by:
        assert q("above", "a", "b") == q("below", "b", "a")
    if az != bz:
        assert q("in_front_of", "a", "b") == q("behind", "b", "a")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(_coord, _coord, _coord), min_size=3, max_size=3))
def test_distance_symmetry_and_triangle(cs):
    sg = scene_of(*(node3d(n, c) for n, c in zip("abc", cs)))
    d = lambda s, o: evaluate_relation(sg, RelationQuery("distance", s, o)).value  # noqa: E731
    assert d("a", "b") == pytest.approx(d("b", "a"))
    assert d("a", "c") <= d("a", "b") + d("b", "c") + 1e-9


# -- ordinal -------------------------------------------------------------------

def _cups(xs):
    return [ObjectNode(f"cup{i}", "cup", Box2D(x - 5, 10, x + 5, 20)) for i, x in enumerate(xs)]


def test_ordinal_rank_examples():
    sg = scene_of(*_cups([10, 50, 90]))
    assert sg.node(ordinal_rank(sg, "cup", "left", 3)).box.center[0] == 90
    assert sg.node(ordinal_rank(sg, "cup", "right", 1)).box.center[0] == 90
    with pytest.raises(ValueError):
        ordinal_rank(sg, "cup", "left", 4)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(5, 600), min_size=1, max_size=8), st.randoms(use_true_random=False),
       st.sampled_from(["left", "right", "top", "bottom"]))
def test_ordinal_permutation_invariant(xs, rnd, axis):
    nodes = _cups(xs)
    shuffled = nodes[:]
    rnd.shuffle(shuffled)
    for k in range(1, len(xs) + 1):
        assert ordinal_rank(scene_of(*nodes), "cup", axis, k) == ordinal_rank(scene_of(*shuffled), "cup", axis, k)


# -- occupancy -----------------------------------------------------------------

def test_one_square_meter_is_four_cells():
    n = ObjectNode("a", "box", Box2D(0, 0, 10, 10), box3d=Box3D(0, 0, 2, 1, 0.5, 3))
    grid = build_occupancy(scene_of(n), 0.5)
    assert int((grid.cells == 0).sum()) == 4


def test_empty_scene_has_no_geometry():
    with pytest.raises(GeometryError):
        build_occupancy(scene_of(ObjectNode("a", "box", Box2D(0, 0, 1, 1))), 0.1)


def test_disjoint_objects_disjoint_cells():
    a = ObjectNode("a", "box", Box2D(0, 0, 1, 1), box3d=Box3D(0, 0, 2, 0.5, 1, 2.5))
    b = ObjectNode("b", "box", Box2D(0, 0, 1, 1), box3d=Box3D(1, 0, 2, 1.5, 1, 2.5))
    grid = build_occupancy(scene_of(a, b), 0.1)
    ca, cb = set(grid.occupied_cells("a")), set(grid.occupied_cells("b"))
    assert ca and cb and not (ca & cb)


def _scan_band(grid, anchor_box, direction, offset):
    """Exhaustive cell scan, computed from raw box numbers."""
    ok = set()
    half = grid.cell_size / 2
    for r in range(grid.rows):
        for c in range(grid.cols):
            x = grid.origin[0] + (c + 0.5) * grid.cell_size
            z = grid.origin[1] + (r + 0.5) * grid.cell_size
            if direction == "right":
                d, lat, lo, hi = x - anchor_box.max_x, z, anchor_box.min_z, anchor_box.max_z
            elif direction == "left":
                d, lat, lo, hi = anchor_box.min_x - x, z, anchor_box.min_z, anchor_box.max_z
            elif direction == "behind":
                d, lat, lo, hi = z - anchor_box.max_z, x, anchor_box.min_x, anchor_box.max_x
            else:
                d, lat, lo, hi = anchor_box.min_z - z, x, anchor_box.min_x, anchor_box.max_x
            if grid.cells[r, c] == FREE and abs(d - offset) <= half + 1e-9 and lo - 1e-9 <= lat <= hi + 1e-9:
                ok.add((r, c))
    return ok


def test_placement_band_right_of_anchor():
    chair = ObjectNode("chair", "chair", Box2D(0, 0, 1, 1), box3d=Box3D(0.5, 0.5, 2.0, 1.0, 1.0, 2.5))
    grid = build_occupancy(scene_of(chair), 0.05)
    pts = sample_placement(grid, "chair", "right", 0.1, 50, seed=1)
    assert pts
    allowed = _scan_band(grid, chair.box3d, "right", 0.1)
    for p in pts:
        assert 1.075 - 1e-9 <= p.world[0] <= 1.175 + 1e-9
        assert p.cell in allowed
    assert {p.cell for p in pts} == allowed


def test_placement_offset_zero_is_adjacent():
    chair = ObjectNode("chair", "chair", Box2D(0, 0, 1, 1), box3d=Box3D(0.5, 0.5, 2.0, 1.0, 1.0, 2.5))
    grid = build_occupancy(scene_of(chair), 0.05)
    for p in sample_placement(grid, "chair", "right", 0.0, 10, seed=0):
        assert p.world[0] == pytest.approx(1.025)


def test_placement_fully_occupied():
    big = ObjectNode("big", "wall", Box2D(0, 0, 1, 1), box3d=Box3D(0, 0, 2, 1, 1, 3))
    grid = build_occupancy(scene_of(big), 0.25, margin=0.0)
    assert (grid.cells != FREE).all()
    with pytest.raises(NoFreeCellError, match="no free cell"):
        sample_placement(grid, "big", "right", 0.0, 1, seed=0)


def test_placement_deterministic_per_seed():
    chair = ObjectNode("chair", "chair", Box2D(0, 0, 1, 1), box3d=Box3D(0.5, 0.5, 2.0, 1.5, 1.0, 3.5))
    grid = build_occupancy(scene_of(chair), 0.05)
    a = sample_placement(grid, "chair", "left", 0.2, 5, seed=9)
    b = sample_placement(grid, "chair", "left", 0.2, 5, seed=9)
    assert a == b


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["left", "right", "front", "behind"]),
       st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.3]), st.sampled_from([0.05, 0.1]))
def test_placement_exhaustive_postcheck(seed, direction, offset, cell):
    rnd = random.Random(seed)
    nodes = []
    for i in range(4):
        x, z = rnd.uniform(-1, 1), rnd.uniform(1.5, 4)
        sx, sz = rnd.uniform(0.1, 0.5), rnd.uniform(0.1, 0.5)
        nodes.append(ObjectNode(f"o{i}", "box", Box2D(0, 0, 1, 1),
                                box3d=Box3D(x, 0.5, z, x + sx, 1.0, z + sz)))
    grid = build_occupancy(scene_of(*nodes), cell)
    try:
        pts = sample_placement(grid, "o0", direction, offset, 10, seed=seed)
    except NoFreeCellError:
        assert not _scan_band(grid, nodes[0].box3d, direction, offset)
        return
    allowed = _scan_band(grid, nodes[0].box3d, direction, offset)
    assert len(pts) <= 10 and len({p.cell for p in pts}) == len(pts)
    assert all(p.cell in allowed for p in pts)


def test_placement_projects_into_image():
    k = CameraIntrinsics(500, 500, 320, 240, 640, 480)
    chair = ObjectNode("chair", "chair", Box2D(0, 0, 1, 1), box3d=Box3D(-0.2, 0.5, 2.0, 0.2, 1.0, 2.4))
    grid = build_occupancy(scene_of(chair, k=k), 0.05)
    for p in sample_placement(grid, "chair", "right", 0.1, 10, seed=2, intrinsics=k):
        u, v = project(p.world, k)
        assert p.pixel == (u, v)
        assert 0 <= u <= 639 and 0 <= v <= 479


def test_gravity_rotation_identity_matches_none():
    chair = ObjectNode("chair", "chair", Box2D(0, 0, 1, 1), box3d=Box3D(0.5, 0.5, 2.0, 1.0, 1.0, 2.5))
    eye = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    g1 = build_occupancy(scene_of(chair), 0.05)
    g2 = build_occupancy(scene_of(chair, rot=eye), 0.05)
    assert np.array_equal(g1.cells, g2.cells)
