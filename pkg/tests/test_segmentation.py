import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import line_cluster, straight_trajectory
from signsight.errors import DegenerateStep, FallbackRequired, ValidationError
from signsight.polyline import Polyline
from signsight.scene import MarkingCluster, ModelParams, PointCloud, Trajectory
from signsight.segmentation import (
    OutlinePair,
    build_arc_sampling,
    classify_markings,
    fallback_outlines,
    measure_clusters,
    outline_polyline,
    segmentation_rectangles,
    select_outlines,
    sign_heading,
    sweep_segment,
)

SIGN = np.array([6.0, 100.0, 2.0])


def _straight_outlines(x_right=3.7, x_left=-3.7, length=100.0, anchor_y=None):
    y = np.arange(0.0, length + 1e-9, 1.0)
    r = Polyline(np.column_stack([np.full_like(y, x_right), y, np.zeros_like(y)]))
    l = Polyline(np.column_stack([np.full_like(y, x_left), y, np.zeros_like(y)]))
    ay = length if anchor_y is None else anchor_y
    return OutlinePair(r, l, np.array([x_right, ay, 0.0]), np.array([x_left, ay, 0.0]))


def test_sign_heading_examples():
    t = Trajectory(np.array([[0, 0, 0], [0, 1, 0]], float))
    np.testing.assert_allclose(sign_heading(np.array([10.0, 0, 2]), t), [-0.9806, 0, -0.1961], atol=1e-4)
    np.testing.assert_allclose(sign_heading(np.array([0.0, 0, 5]), t), [0, 0, -1])


def test_empty_trajectory_is_load_error():
    with pytest.raises(ValidationError):
        Trajectory(np.zeros((0, 3)))


@pytest.mark.parametrize("length, kind", [(45.0, "solid"), (3.0, "dashed"), (30.0, "solid")])
def test_classify(length, kind):
    c = MarkingCluster(PointCloud(np.zeros((1, 3))), length=length)
    assert classify_markings([c])[0].kind == kind


def test_measure_clusters_length(traj):
    (c,) = measure_clusters([line_cluster(1.7, 10, 55)], traj)
    assert c.length == pytest.approx(45.0)


def _solids(traj, xs):
    return classify_markings(measure_clusters([line_cluster(x, 0, 130, name=str(x)) for x in xs], traj))


def test_select_outlines_picks_outer_right_and_nearest_left(traj):
    solids = _solids(traj, [1.7, 5.2, -1.8])
    pair = select_outlines(solids, traj, SIGN)
    assert pair.right_anchor[0] == pytest.approx(5.2)
    assert pair.left_anchor[0] == pytest.approx(-1.8)
    assert pair.driving_width == pytest.approx(7.0)
    assert not pair.fallback


def test_select_outlines_single_pair(traj):
    pair = select_outlines(_solids(traj, [3.5, -3.5]), traj, SIGN)
    assert (pair.right_anchor[0], pair.left_anchor[0]) == pytest.approx((3.5, -3.5))


def test_select_outlines_needs_solids(traj):
    with pytest.raises(FallbackRequired):
        select_outlines([], traj, SIGN)
    with pytest.raises(FallbackRequired):
        select_outlines(_solids(traj, [2.0, 4.0]), traj, SIGN)


def test_select_outlines_ignores_input_order(traj):
    solids = _solids(traj, [1.7, 5.2, -1.8, -5.0])
    ref = select_outlines(solids, traj, SIGN)
    for perm in itertools.permutations(solids):
        got = select_outlines(list(perm), traj, SIGN)
        np.testing.assert_array_equal(got.right_anchor, ref.right_anchor)
        np.testing.assert_array_equal(got.left_anchor, ref.left_anchor)


def test_outline_polyline_fills_gaps(traj):
    a = line_cluster(3.0, 0, 40)
    b = line_cluster(3.0, 60, 100)
    merged = MarkingCluster(PointCloud(np.concatenate([a.cloud.points, b.cloud.points])))
    poly = outline_polyline(merged, traj)
    assert poly.points[:, 1].min() < 1 and poly.points[:, 1].max() > 99
    np.testing.assert_allclose(poly.points[:, 0], 3.0, atol=1e-9)
    assert np.diff(poly.points[:, 1]).max() <= 1.0 + 1e-9


def test_fallback_outlines_straight():
    t = straight_trajectory(100, 1.0, z=2.2)
    pair = fallback_outlines(t, 2.2, 3.5)
    np.testing.assert_allclose(pair.right.points[:, 0], 3.5)
    np.testing.assert_allclose(pair.left.points[:, 0], -3.5)
    np.testing.assert_allclose(pair.right.points[:, 2], 0.0, atol=1e-12)
    assert pair.fallback


def test_fallback_outlines_zero_width():
    t = straight_trajectory(100, 1.0, z=2.2)
    pair = fallback_outlines(t, 2.2, 0.0)
    np.testing.assert_allclose(pair.right.points, pair.left.points)
    np.testing.assert_allclose(pair.right.points[:, :2], t.points[:, :2])


def test_fallback_outlines_on_arc_keep_constant_offset():
    R = 200.0
    th = np.arange(0, 0.5, 0.5 / R)  # 0.5 m chords
    t = Trajectory(np.column_stack([R * np.cos(th), R * np.sin(th), np.full_like(th, 2.0)]))
    pair = fallback_outlines(t, 2.0, 3.5)
    r = np.hypot(pair.right.points[:, 0], pair.right.points[:, 1])
    l = np.hypot(pair.left.points[:, 0], pair.left.points[:, 1])
    # travel is counter-clockwise, so right of travel is outward
    np.testing.assert_allclose(r, R + 3.5, atol=1e-3)
    np.testing.assert_allclose(l, R - 3.5, atol=1e-3)


def test_fallback_anchors_on_heading_line():
    t = straight_trajectory(130, 0.5)
    pair = fallback_outlines(t, 2.2, 1.75, SIGN)
    assert pair.right_anchor[1] == pytest.approx(100.0)
    assert pair.left_anchor[1] == pytest.approx(100.0)


# arc sampling ---------------------------------------------------------------


def test_arc_sampling_60():
    s = build_arc_sampling(_straight_outlines(), 60.0, 2.0)
    assert len(s) == 31
    assert s.length == pytest.approx(60.0, abs=1e-6)
    assert np.sum(np.linalg.norm(np.diff(s.m, axis=0), axis=1)) == pytest.approx(60.0, abs=1e-6)
    assert not s.short_field


def test_arc_sampling_remainder():
    s = build_arc_sampling(_straight_outlines(), 45.0, 2.0)
    steps = np.linalg.norm(np.diff(s.m, axis=0), axis=1)
    assert len(s) == 24
    assert steps[-1] == pytest.approx(1.0, abs=1e-9)
    assert s.length == pytest.approx(45.0, abs=1e-6)


def test_arc_sampling_short_field():
    s = build_arc_sampling(_straight_outlines(length=30.0), 60.0, 2.0)
    assert len(s) == 16
    assert s.short_field
    assert s.length == pytest.approx(30.0)


def test_arc_sampling_rejects_bad_interval():
    with pytest.raises(ValueError):
        build_arc_sampling(_straight_outlines(), 60.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(5, 90), st.floats(0.5, 4.0), st.floats(50, 2000))
def test_arc_length_matches_sight_distance_on_arcs(sd, interval, radius):
    if interval >= sd:
        return
    th = np.linspace(0, 110.0 / radius, 400)
    t = Trajectory(np.column_stack([radius * np.cos(th), radius * np.sin(th), np.full_like(th, 2.0)]))
    q = t.points[-20]
    sign = np.array([q[0] * (1 + 6.0 / radius), q[1] * (1 + 6.0 / radius), 2.0])
    pair = fallback_outlines(t, 2.0, 3.5, sign)
    s = build_arc_sampling(pair, sd, interval, t)
    avail = s.length
    assert np.sum(np.linalg.norm(np.diff(s.m, axis=0), axis=1)) == pytest.approx(avail, abs=1e-6)
    if not s.short_field:
        assert avail == pytest.approx(sd, abs=1e-6)


# rectangles and sweep ---------------------------------------------------------


def test_rectangles_example():
    p = ModelParams()
    r, m = segmentation_rectangles([0, 0, 0], [0, 1, 0], p, 7.4)
    np.testing.assert_allclose(r, [[0, 0, 0.3], [0, 0, 3], [2, 0, 3], [2, 0, 0.3]])
    np.testing.assert_allclose(m[2], [-7.5, 0, -1])
    np.testing.assert_allclose(m[3], [-7.5, 0, 1])


def test_rectangles_degenerate():
    with pytest.raises(DegenerateStep):
        segmentation_rectangles([0, 0, 0], [0, 0, 0], ModelParams(), 7.4)
    with pytest.raises(DegenerateStep):
        segmentation_rectangles([0, 0, 0], [0, 0, 1], ModelParams(), 7.4)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-3, 3))
def test_rectangle_normal_is_horizontal_unit(dx, dy, dz):
    if np.hypot(dx, dy) < 1e-3:
        return
    r, _ = segmentation_rectangles([0, 0, 0], [dx, dy, dz], ModelParams(), 7.0)
    h = (r[3] - r[0]) / 2.0
    assert abs(np.linalg.norm(h) - 1) < 1e-12
    assert abs(h[2]) < 1e-15


def _sweep(points, sd=60.0):
    pair = _straight_outlines(length=100.0)
    s = build_arc_sampling(pair, sd, 2.0)
    return sweep_segment(PointCloud(np.asarray(points, float)), s, ModelParams(), pair.driving_width)


def test_sweep_examples():
    pts = [[3.7 + 1.0, 80, 1.5], [3.7 + 1.0, 80, 0.1], [3.7 + 5.0, 80, 1.5], [0.0, 80, 0.0]]
    seg = _sweep(pts)
    assert seg.env_index.tolist() == [0]
    assert seg.marking_index.tolist() == [3]


def test_sweep_equals_brute_force_on_straight_road():
    rng = np.random.default_rng(9)
    pts = np.column_stack([rng.uniform(-8, 9, 100_000), rng.uniform(20, 110, 100_000),
                           rng.uniform(-1.5, 3.5, 100_000)])
    seg = _sweep(pts)
    p = ModelParams()
    # the swept band of a straight road is one box beside the right outline
    x, y, z = pts.T
    env = ((x >= 3.7) & (x <= 3.7 + p.band_width) & (y >= 40) & (y <= 100)
           & (z >= p.band_low) & (z <= p.band_high))
    mark = ((x <= 3.7) & (x >= -3.7 - p.marking_margin) & (y >= 40) & (y <= 100)
            & (np.abs(z) <= p.marking_half_height))
    np.testing.assert_array_equal(seg.env_index, np.flatnonzero(env))
    np.testing.assert_array_equal(seg.marking_index, np.flatnonzero(mark))


def test_sweep_excludes_panel_points():
    panel = PointCloud(np.array([[4.7, 99.0, 2.0]]))
    pair = _straight_outlines()
    s = build_arc_sampling(pair, 60.0, 2.0)
    pts = PointCloud(np.array([[4.7, 99.0, 2.0], [4.7, 90.0, 2.0]]))
    seg = sweep_segment(pts, s, ModelParams(), pair.driving_width, exclude=panel)
    assert seg.env_index.tolist() == [1]
