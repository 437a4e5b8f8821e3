import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signsight.errors import DegeneratePanel, ValidationError
from signsight.geometry import Rotation
from signsight.io import canonicalize_panel
from signsight.polyline import Polyline
from signsight.scene import (
    MPH,
    ModelParams,
    PointCloud,
    SignInstance,
    SignLibrary,
    Trajectory,
    make_panel,
    parse_speed,
    plane_fit_center,
    standard_area,
)
from signsight.spatial import GridIndex


def test_defaults_follow_parameter_table():
    p = ModelParams()
    assert (p.alpha, p.beta, p.lam, p.eta, p.gamma, p.delta, p.sigma) == (0.8, 0.2, 6, 6, 1, 0, 0.71)
    assert (p.d_alpha, p.d_retina, p.h_eye, p.d_standard, p.w_shoulder) == (0.1, 0.017, 1.2, 2.0, 0.5)
    assert math.degrees(p.depression) == pytest.approx(15.0)
    assert math.degrees(p.pass_angle) == pytest.approx(22.5)


@pytest.mark.parametrize("kw, needle", [
    ({"alpha": 0.9, "beta": 0.2}, r"alpha \+ beta"),
    ({"lam": 5.0}, "lam"),
    ({"sigma": 1.0}, "sigma"),
    ({"sigma": 0.0}, "sigma"),
    ({"d_standard": 3.5}, "d_standard"),
    ({"gamma": 0.5}, r"gamma \+ delta"),
])
def test_params_validation(kw, needle):
    with pytest.raises(ValidationError, match=needle):
        ModelParams(**kw)


def test_overrides_convert_units():
    p = ModelParams().with_overrides({"depression_deg": "10", "v85": "25 mph", "lam": "8"})
    assert p.depression == pytest.approx(math.radians(10))
    assert p.v85 == pytest.approx(25 * MPH)
    assert p.lam == 8.0


def test_overrides_reject_unknown_key_with_line():
    with pytest.raises(ValidationError) as info:
        ModelParams().with_overrides({"bogus": ("1", 7)}, "p.txt")
    assert info.value.line == 7


@pytest.mark.parametrize("text, mps", [
    ("25 mph", 11.176), ("36 km/h", 10.0), ("11.2 m/s", 11.2), ("4", 4.0), (7.5, 7.5),
])
def test_parse_speed(text, mps):
    assert parse_speed(text) == pytest.approx(mps)


def test_parse_speed_requires_unit():
    with pytest.raises(ValueError):
        parse_speed("25", require_unit=True)
    with pytest.raises(ValueError):
        parse_speed("fast")


def test_point_cloud_checks_shape_and_is_read_only():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0, 0, np.nan]]))
    pc = PointCloud(np.zeros((2, 3)), [1, 2])
    with pytest.raises(ValueError):
        pc.points[0, 0] = 1.0
    both = PointCloud.concat([pc, pc])
    assert len(both) == 4 and both.intensity.tolist() == [1, 2, 1, 2]


def test_plane_fit_exact_plane():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-1, 1, (50, 2)), np.ones(50)])
    _, n, rms = plane_fit_center(PointCloud(pts))
    assert abs(abs(n[2]) - 1) < 1e-12
    assert rms < 1e-12


def test_plane_fit_square_center():
    sq = np.array([[-1, 0, -1], [1, 0, -1], [1, 0, 1], [-1, 0, 1]], float)
    c, n, _ = plane_fit_center(PointCloud(sq), toward=[0, -5, 0])
    np.testing.assert_allclose(c, 0, atol=1e-15)
    np.testing.assert_allclose(n, [0, -1, 0], atol=1e-12)


def test_plane_fit_noise_rms():
    rng = np.random.default_rng(42)
    pts = np.column_stack([rng.uniform(-1, 1, (4000, 2)), rng.normal(0, 0.01, 4000)])
    _, _, rms = plane_fit_center(PointCloud(pts))
    assert rms == pytest.approx(0.01, abs=0.003)


def test_plane_fit_collinear():
    with pytest.raises(DegeneratePanel):
        plane_fit_center(PointCloud(np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])))


def test_sign_instance_rejects_bad_panel():
    with pytest.raises(ValidationError, match="planar"):
        rng = np.random.default_rng(1)
        SignInstance("s", "square600", PointCloud(rng.uniform(-1, 1, (100, 3))))
    with pytest.raises(ValidationError):
        SignInstance("s", "square600", PointCloud(make_panel("square", 0.6)), side="left")


def test_standard_area_square():
    p = ModelParams()
    a = standard_area(make_panel("square", 0.6), p)
    assert a == pytest.approx(2.601e-5, rel=0.02)
    assert standard_area(make_panel("square", 0.6), p) == a


def test_standard_area_circle():
    a = standard_area(make_panel("circle", 0.6), ModelParams())
    assert a == pytest.approx(math.pi * (0.3 * 0.017 / 2) ** 2, rel=0.02)
    assert a == pytest.approx(2.043e-5, rel=0.02)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-10, 10), st.floats(-10, 10))
def test_standard_area_rigid_invariance(q0, q1, q2, q3, tx, ty):
    q = np.array([q0, q1, q2, q3])
    if np.linalg.norm(q) < 1e-2:
        return
    p = ModelParams()
    panel = make_panel("square", 0.6, spacing=0.03)
    moved = Rotation(q).apply(panel) + [tx, ty, 1.0]
    a0 = standard_area(panel, p)
    a1 = standard_area(canonicalize_panel(moved), p)
    assert a1 == pytest.approx(a0, rel=1e-6)


def test_builtin_library():
    lib = SignLibrary.builtin()
    assert set(lib) == {"square600", "circle600", "triangle700"}
    assert lib.entry("square600").sight_distance_for(30 * MPH) == 45.0
    with pytest.raises(ValidationError, match="not found"):
        lib.entry("nope")


# polylines and the grid index ----------------------------------------------


def test_polyline_project_and_offset():
    line = Polyline(np.array([[0, 0, 0], [0, 10, 0], [0, 20, 1]], float))
    s, lat, _ = line.project([[1.0, 5.0, 0.0], [-2.0, 15.0, 0.0]])
    np.testing.assert_allclose(s, [5.0, 15.0])
    np.testing.assert_allclose(lat, [1.0, -2.0])
    right = line.offset(1.5)
    np.testing.assert_allclose(right.points[:, 0], 1.5)
    assert line.length == 20.0


def test_polyline_intersect_line():
    line = Polyline(np.array([[0, 0, 0], [0, 10, 2]], float))
    p, s = line.intersect_line([5, 5, 0], [-1, 0, 0])
    np.testing.assert_allclose(p, [0, 5, 1])
    assert s == 5.0
    assert line.intersect_line([5, 5, 0], [0, 1, 0]) is None


def test_trajectory_rejects_short():
    with pytest.raises(ValidationError):
        Trajectory(np.zeros((1, 3)))


def test_grid_index_queries_are_supersets():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-20, 20, (5000, 3))
    g = GridIndex(pts, 1.0)
    box = set(g.query_box((-3, -4), (5, 2)).tolist())
    truth = np.flatnonzero((pts[:, 0] >= -3) & (pts[:, 0] <= 5) & (pts[:, 1] >= -4) & (pts[:, 1] <= 2))
    assert set(truth.tolist()) <= box

    a, b, r = np.array([-10, -5, 0.0]), np.array([12, 7, 0.0]), 1.5
    d = b[:2] - a[:2]
    t = np.clip(((pts[:, :2] - a[:2]) @ d) / (d @ d), 0, 1)
    dist = np.linalg.norm(pts[:, :2] - (a[:2] + t[:, None] * d), axis=1)
    assert set(np.flatnonzero(dist <= r).tolist()) <= set(g.query_capsule(a, b, r).tolist())

    cone = g.query_cone(a, b, 3.0)
    assert np.all(np.diff(cone) > 0)
    radius = 3.0 * t
    inside = dist <= radius
    assert set(np.flatnonzero(inside).tolist()) <= set(cone.tolist())


def test_grid_index_empty():
    g = GridIndex(np.zeros((0, 3)))
    assert len(g.query_box((0, 0), (1, 1))) == 0
    assert len(g.query_cone((0, 0, 0), (1, 1, 1), 1.0)) == 0
