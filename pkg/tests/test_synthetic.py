import filecmp
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SPECS
from signsight.errors import ValidationError
from signsight.io import load_scene, read_point_cloud
from signsight.synthetic import (
    OccluderSpec,
    RoadFrame,
    SceneSpec,
    SignSpec,
    analytic_occlusion_ratio,
    box_corners,
    box_surface,
    check_spec,
    generate_synthetic_scene,
    load_spec,
    pose_sign,
)


def _spec(**kw):
    sign = kw.pop("sign", SignSpec("S1", depression=0.0, pass_angle=0.0))
    base = dict(seed=3, length=100.0, sight_distance=40.0)
    return SceneSpec(signs=[sign], **{**base, **kw})


def _box(lo, hi, frame=RoadFrame()):
    """World corners of a road-local (s, l, h) box."""
    c = box_corners(lo, hi)
    return frame.to_world(c[:, 0], c[:, 1], c[:, 2])


def _tree(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def test_same_seed_same_bytes(tmp_path):
    spec = load_spec(SPECS / "wall.toml")
    spec.noise = 0.01
    generate_synthetic_scene(spec, tmp_path / "a")
    generate_synthetic_scene(spec, tmp_path / "b")
    files = _tree(tmp_path / "a")
    assert files == _tree(tmp_path / "b")
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", [str(f) for f in files], shallow=False)
    assert mismatch == [] and errors == []


def test_noise_depends_on_seed(tmp_path):
    spec = _spec(noise=0.01)
    generate_synthetic_scene(spec, tmp_path / "a")
    spec.seed += 1
    generate_synthetic_scene(spec, tmp_path / "b")
    assert (tmp_path / "a/environment.xyz").read_bytes() != (tmp_path / "b/environment.xyz").read_bytes()


def test_round_trip_counts_and_pose(tmp_path):
    spec = load_spec(SPECS / "wall.toml")
    manifest = generate_synthetic_scene(spec, tmp_path)
    scene = load_scene(manifest)
    env = read_point_cloud(tmp_path / "environment.xyz")
    assert len(scene.environment) == len(env)
    assert len(scene.trajectory.points) == len(np.arange(0, spec.length + 1e-9, spec.trajectory_spacing))
    gt = json.loads((tmp_path / "ground_truth.json").read_text())["signs"][0]
    sign = scene.signs[0]
    posed = pose_sign(spec.signs[0], spec.frame)
    assert len(sign.panel) == len(posed.points)
    np.testing.assert_array_equal(sign.panel.points, posed.points)
    np.testing.assert_allclose(sign.center, gt["center"], atol=1e-9)
    np.testing.assert_allclose(sign.normal(), gt["normal"], atol=1e-9)
    assert sign.sight_distance == 60.0


def test_no_occluder_ground_truth_zero(tmp_path):
    generate_synthetic_scene(_spec(), tmp_path)
    rows = json.loads((tmp_path / "ground_truth.json").read_text())["signs"][0]["occlusion"]
    assert len(rows) == 2 * 21
    assert all(r["ratio"] == 0.0 for r in rows)


def test_half_covering_plate():
    # frontal panel seen head-on; a plate whose top edge is level with the
    # panel center shades exactly the lower half
    spec = _spec()
    ps = pose_sign(spec.signs[0], spec.frame)
    vp = spec.frame.to_world(ps.spec.station - 10.0, ps.spec.lateral, ps.spec.height)
    plate = _box([ps.spec.station - 1.0, -1.0, 0.0], [ps.spec.station - 0.99, 2.0, ps.spec.height])
    assert analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, [plate], vp) == pytest.approx(0.5, abs=1e-12)


def test_two_overlapping_plates_are_not_double_counted():
    spec = _spec()
    ps = pose_sign(spec.signs[0], spec.frame)
    vp = spec.frame.to_world(90.0, 0.5, 2.0)
    a = _box([98.0, -1, 0], [98.01, 2, 2.0])
    b = _box([97.0, 0.5, 0], [97.01, 2, 3.0])
    ratio = analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, [a, b], vp)
    # lower half, plus the upper-right quarter not already covered
    assert ratio == pytest.approx(0.75, abs=1e-9)


def test_occluder_behind_panel_or_viewer_casts_nothing():
    spec = _spec()
    ps = pose_sign(spec.signs[0], spec.frame)
    vp = spec.frame.to_world(90.0, 0.5, 2.0)
    behind_panel = _box([100.5, -1, 0], [101, 2, 4])
    behind_viewer = _box([85.0, -1, 0], [89.5, 2, 4])
    assert analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, [behind_panel, behind_viewer], vp) == 0.0


def test_box_spanning_the_viewer_is_clipped():
    # a roadside wall running past the eye shades only with its part ahead
    spec = _spec(sign=SignSpec("S1", lateral=2.5))
    ps = pose_sign(spec.signs[0], spec.frame)
    vp = spec.frame.to_world(80.0, -1.85, 1.2)
    long_ = _box([50.0, 0.05, 0], [98.3, 0.15, 1.5])
    near = _box([80.0, 0.05, 0], [98.3, 0.15, 1.5])
    r_long = analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, [long_], vp)
    r_near = analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, [near], vp)
    assert 0.1 < r_long < 0.9
    assert r_long == pytest.approx(r_near, abs=1e-7)


def test_box_surface_is_on_the_faces():
    pts = box_surface([0, 0, 0], [1, 2, 3], 0.25)
    on_face = np.isclose(pts, 0).any(axis=1) | np.isclose(pts, [1, 2, 3]).any(axis=1)
    assert on_face.all()
    assert len(np.unique(pts, axis=0)) == len(pts)
    # corners are sampled
    for c in box_corners([0, 0, 0], [1, 2, 3]):
        assert np.any(np.all(np.isclose(pts, c), axis=1))


@settings(max_examples=60, deadline=None)
@given(st.floats(-200, 200), st.floats(-5, 5), st.floats(0, 5), st.sampled_from([math.inf, 150.0, -300.0]))
def test_road_frame_preserves_lateral_distance(s, l, h, radius):
    frame = RoadFrame(radius)
    p = frame.to_world(s, l, h)
    edge = frame.to_world(s, 0.0, h)
    assert np.linalg.norm(p - edge) == pytest.approx(abs(l), abs=1e-9)
    fwd, right, up = frame.axes(s)
    np.testing.assert_allclose(np.cross(fwd, right), -up, atol=1e-12)


@pytest.mark.parametrize("change, needle", [
    (dict(lanes=0), "lane"),
    (dict(length=-1.0), "length"),
    (dict(radius=5.0), "radius"),
    (dict(design_speed="30"), "unit"),
    (dict(occluders=[OccluderSpec(np.zeros(3), np.array([1.0, 0.0, 1.0]))]), "occluder 0"),
])
def test_inconsistent_spec(change, needle):
    spec = _spec(**change)
    with pytest.raises(ValidationError, match=needle):
        check_spec(spec)


def test_bad_sign_entries():
    spec = _spec(sign=SignSpec("S1", station=500.0, shape="hexagon"))
    with pytest.raises(ValidationError) as info:
        check_spec(spec)
    assert "station" in str(info.value) and "hexagon" in str(info.value)


def test_spec_file_unknown_key(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text("[road]\nlength = 50\nwidth = 3\n")
    with pytest.raises(ValidationError, match="width"):
        load_spec(f)


def test_spec_file_angles_in_degrees(tmp_path):
    f = tmp_path / "s.toml"
    f.write_text('[[sign]]\nid = "A"\ndepression_deg = 10\npass_angle_deg = 0\n')
    sign = load_spec(f).signs[0]
    assert sign.depression == pytest.approx(math.radians(10)) and sign.pass_angle == 0.0


def test_without_markings_manifest_requests_fallback(tmp_path):
    manifest = generate_synthetic_scene(_spec(markings=False), tmp_path)
    assert load_scene(manifest).fallback
