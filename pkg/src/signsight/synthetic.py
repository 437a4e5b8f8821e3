"""Seeded synthetic road scenes with analytic occlusion ground truth.

Scenes are described in a road-local frame: ``s`` is the station along the
right road edge, ``l`` the lateral offset (positive to the right, away from
the carriageway) and ``h`` the height above the road surface. Lanes lie at
negative ``l``; traffic drives toward increasing ``s``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .errors import ValidationError
from .geometry import central_footprints, polygon_area, view_transform
from .ideal import pose_matrix
from .io import read_toml, write_point_cloud
from .scene import ModelParams, make_panel, panel_outline, parse_speed

Z = np.array([0.0, 0.0, 1.0])


# --------------------------------------------------------------------------
# road frame


@dataclass(frozen=True)
class RoadFrame:
    """Road-local to world mapping. ``radius`` > 0 curves left, < 0 right,
    infinite is straight."""

    radius: float = math.inf
    grade: float = 0.0

    @property
    def straight(self) -> bool:
        return not math.isfinite(self.radius)

    def to_world(self, s, l, h) -> np.ndarray:
        s, l, h = np.broadcast_arrays(np.asarray(s, float), np.asarray(l, float), np.asarray(h, float))
        z = h + self.grade * s
        if self.straight:
            return np.stack([l, s, z], axis=-1)
        R = self.radius
        th = s / R
        return np.stack([-R + (R + l) * np.cos(th), (R + l) * np.sin(th), z], axis=-1)

    def axes(self, s: float):
        """Horizontal forward, horizontal right and up unit vectors at ``s``."""
        if self.straight:
            return np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]), Z.copy()
        th = s / self.radius
        return np.array([-math.sin(th), math.cos(th), 0.0]), np.array([math.cos(th), math.sin(th), 0.0]), Z.copy()

    def local_vector(self, s: float, v_l: float, v_s: float, v_h: float) -> np.ndarray:
        fwd, right, up = self.axes(s)
        return v_l * right + v_s * fwd + v_h * up


# --------------------------------------------------------------------------
# spec


@dataclass
class SignSpec:
    id: str
    shape: str = "square"
    size: float = 0.6
    station: float = 100.0
    lateral: float = 0.5
    height: float = 2.0
    side: str = "right"
    depression: float = math.radians(15.0)
    pass_angle: float = math.radians(22.5)
    spacing: float = 0.02
    pole: bool = True
    sight_distance: float | None = None

    @property
    def sign_type(self) -> str:
        return f"{self.shape}{int(round(self.size * 1000))}"


@dataclass
class OccluderSpec:
    lo: np.ndarray
    hi: np.ndarray
    spacing: float = 0.05


@dataclass
class SceneSpec:
    seed: int = 0
    length: float = 130.0
    radius: float = math.inf
    grade: float = 0.0
    lanes: int = 2
    lane_width: float = 3.7
    trajectory_spacing: float = 0.5
    device_height: float = 2.0
    markings: bool = True
    marking_width: float = 0.15
    marking_spacing: float = 0.05
    dash_length: float = 3.0
    dash_gap: float = 6.0
    ground_spacing: float = 0.0
    ground_margin: float = 3.0
    noise: float = 0.0
    design_speed: str = "30 mph"
    v85: str = "25 mph"
    t_vrt: float = 2.5
    sight_distance: float | None = None
    signs: list = field(default_factory=list)
    occluders: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def frame(self) -> RoadFrame:
        return RoadFrame(self.radius, self.grade)

    @property
    def model_params(self) -> ModelParams:
        return ModelParams().with_overrides(self.params)


_ROAD_FIELDS = {
    "length", "radius", "grade", "lanes", "lane_width", "trajectory_spacing", "device_height",
    "markings", "marking_width", "marking_spacing", "dash_length", "dash_gap", "ground_spacing",
    "ground_margin", "noise", "design_speed", "v85", "t_vrt", "sight_distance",
}


def load_spec(path) -> SceneSpec:
    """Parse a synthetic-scene spec file and check it for consistency."""
    path = Path(path)
    data, _ = read_toml(path)
    spec = SceneSpec(seed=int(data.get("seed", 0)))
    for key, val in dict(data.get("road", {})).items():
        if key not in _ROAD_FIELDS:
            raise ValidationError(f"unknown road key {key!r}", path)
        if key == "lanes":
            val = int(val)
        elif key == "markings":
            val = bool(val)
        elif key in ("design_speed", "v85"):
            val = str(val)
        elif val is not None:
            val = float(val)
        setattr(spec, key, val)
    for row in data.get("sign", []):
        row = dict(row)
        kw = {"id": str(row.pop("id", f"S{len(spec.signs) + 1}"))}
        for key in ("depression_deg", "pass_angle_deg"):
            if key in row:
                kw[key[:-4]] = math.radians(float(row.pop(key)))
        for key, val in row.items():
            if key not in SignSpec.__dataclass_fields__:
                raise ValidationError(f"unknown sign key {key!r}", path)
            kw[key] = val
        spec.signs.append(SignSpec(**kw))
    for row in data.get("occluder", []):
        try:
            lo = np.asarray(row["min"], float).reshape(3)
            hi = np.asarray(row["max"], float).reshape(3)
        except (KeyError, ValueError):
            raise ValidationError("occluder needs 'min' and 'max' as [s, l, h]", path) from None
        spec.occluders.append(OccluderSpec(lo, hi, float(row.get("spacing", 0.05))))
    spec.params = dict(data.get("params", {}))
    check_spec(spec, path)
    return spec


def check_spec(spec: SceneSpec, path=None) -> None:
    problems = []
    if spec.length <= 0:
        problems.append("road length must be > 0")
    if spec.lanes < 1:
        problems.append("need at least one lane")
    if not spec.radius != 0:
        problems.append("radius must be non-zero (use inf for straight)")
    elif math.isfinite(spec.radius) and abs(spec.radius) <= spec.lanes * spec.lane_width + 5:
        problems.append("curve radius too tight for the carriageway")
    if spec.trajectory_spacing <= 0 or spec.marking_spacing <= 0:
        problems.append("spacings must be > 0")
    ids = [s.id for s in spec.signs]
    if len(set(ids)) != len(ids):
        problems.append("duplicate sign ids")
    for s in spec.signs:
        if not 0 <= s.station <= spec.length:
            problems.append(f"sign {s.id} station outside the road")
        if s.shape not in ("square", "circle", "triangle"):
            problems.append(f"sign {s.id}: unknown shape {s.shape!r}")
        if s.side not in ("right", "overhead"):
            problems.append(f"sign {s.id}: side must be right or overhead")
    for k, o in enumerate(spec.occluders):
        if np.any(o.hi <= o.lo):
            problems.append(f"occluder {k}: max must exceed min on every axis")
        if o.spacing <= 0:
            problems.append(f"occluder {k}: spacing must be > 0")
    try:
        parse_speed(spec.design_speed, require_unit=True)
        parse_speed(spec.v85, require_unit=True)
    except ValueError as exc:
        problems.append(str(exc))
    if problems:
        raise ValidationError("inconsistent spec: " + "; ".join(problems), path)


# --------------------------------------------------------------------------
# sampling


def _axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    n = max(1, int(math.ceil((hi - lo) / spacing)))
    return np.linspace(lo, hi, n + 1)


def box_surface(lo, hi, spacing: float) -> np.ndarray:
    """Grid samples on the six faces of an axis-aligned box (local coords)."""
    axes = [_axis(lo[d], hi[d], spacing) for d in range(3)]
    out = []
    for d in range(3):
        a, b = [axes[k] for k in range(3) if k != d]
        ga, gb = np.meshgrid(a, b, indexing="ij")
        for v in (lo[d], hi[d]):
            face = np.empty((ga.size, 3))
            face[:, d] = v
            others = [k for k in range(3) if k != d]
            face[:, others[0]] = ga.ravel()
            face[:, others[1]] = gb.ravel()
            out.append(face)
    pts = np.concatenate(out)
    return np.unique(pts, axis=0)


def box_corners(lo, hi) -> np.ndarray:
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def sign_normal_local(depression: float, pass_angle: float) -> tuple[float, float, float]:
    """Panel normal in (l, s, h) components: faces oncoming traffic (-s),
    turned by the pass angle toward +l and tilted up by the depression."""
    c = math.cos(depression)
    return c * math.sin(pass_angle), -c * math.cos(pass_angle), math.sin(depression)


@dataclass
class PosedSign:
    spec: SignSpec
    center: np.ndarray
    normal: np.ndarray
    points: np.ndarray
    outline: np.ndarray


def pose_sign(spec: SignSpec, frame: RoadFrame) -> PosedSign:
    center = frame.to_world(spec.station, spec.lateral, spec.height)
    n = frame.local_vector(spec.station, *sign_normal_local(spec.depression, spec.pass_angle))
    n = n / np.linalg.norm(n)
    rot = pose_matrix(n)
    canon = make_panel(spec.shape, spec.size, spec.spacing)
    pts = canon @ rot.T + center
    ring = panel_outline(spec.shape, spec.size)
    ring3 = np.column_stack([ring[:, 0], np.zeros(len(ring)), ring[:, 1]])
    # the canonical panel is centered on its centroid; the outline already is
    return PosedSign(spec, center, n, pts, ring3 @ rot.T + center)


def _pole(sign: PosedSign, frame: RoadFrame, spacing: float = 0.05) -> np.ndarray:
    """Vertical pole just behind the panel, from the road to the panel center."""
    back = sign.normal.copy()
    back[2] = 0.0
    back = -back / np.linalg.norm(back)
    base = sign.center + 0.08 * back
    ground = frame.to_world(sign.spec.station, sign.spec.lateral, 0.0)[2]
    zs = np.arange(ground, sign.center[2], spacing)
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    r = 0.03
    ring = base[:2] + r * np.column_stack([np.cos(ang), np.sin(ang)])
    xy = np.repeat(ring, len(zs), axis=0)
    return np.column_stack([xy, np.tile(zs, len(ang))])


# --------------------------------------------------------------------------
# ground truth


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of ``subject`` by the convex CCW polygon
    ``clip``."""
    out = subject
    n = len(clip)
    for k in range(n):
        if len(out) == 0:
            break
        a, b = clip[k], clip[(k + 1) % n]
        e = b - a
        side = e[0] * (out[:, 1] - a[1]) - e[1] * (out[:, 0] - a[0])
        new = []
        m = len(out)
        for i in range(m):
            p, q = out[i], out[(i + 1) % m]
            sp, sq = side[i], side[(i + 1) % m]
            if sp >= 0:
                new.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                new.append(p + t * (q - p))
        out = np.array(new) if new else np.zeros((0, 2))
    return out


def _ccw(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    a = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
    return poly if a > 0 else poly[::-1]


def _clip_to_view(corners_view: np.ndarray, n_v: np.ndarray, eye_side: float, D: float):
    """Vertices of a convex box (view frame) cut down to the part lying in
    front of the panel plane and in front of the eye, or ``None`` if empty."""
    hs = ConvexHull(corners_view).equations
    near = 1e-9 * D
    extra = np.array([
        [*(-eye_side * n_v), 0.0],       # on the eye's side of the panel plane
        [0.0, 0.0, 1.0, near - D],       # at least ``near`` in front of the eye
    ])
    hs = np.vstack([hs, extra])
    A, b = hs[:, :3], hs[:, 3]
    # Chebyshev center: an interior point, and the largest ball that fits
    norm = np.linalg.norm(A, axis=1)
    res = linprog([0, 0, 0, -1], A_ub=np.column_stack([A, norm]), b_ub=-b,
                  bounds=[(None, None)] * 3 + [(0, None)], method="highs")
    if res.status != 0 or res.x[3] <= 1e-12:
        return None
    return HalfspaceIntersection(hs, res.x[:3]).intersections


def analytic_occlusion_ratio(outline, normal, center, boxes, viewpoint):
    """Exact occluded fraction of a planar convex panel behind convex boxes
    (given by their 8 world corners). Only the part of each box between the
    eye and the panel plane casts a shadow. Returns ``None`` when more than
    two shadows overlap the panel."""
    vt = view_transform(center, viewpoint)
    D = vt.distance
    panel = _ccw(central_footprints(vt.to_view(outline), D))
    n_v = vt.rotation.apply(np.asarray(normal, float)[None, :])[0]
    eye_side = float(np.sign(n_v[2]))
    shadows = []
    for corners in boxes:
        part3 = _clip_to_view(vt.to_view(corners), n_v, eye_side, D)
        if part3 is None:
            continue
        foot = central_footprints(part3, D)
        hull = _ccw(foot[ConvexHull(foot).vertices])
        part = _clip_convex(hull, panel)
        if len(part) >= 3 and polygon_area(part) > 0:
            shadows.append(_ccw(part))
    if not shadows:
        return 0.0
    if len(shadows) == 1:
        area = polygon_area(shadows[0])
    elif len(shadows) == 2:
        both = _clip_convex(shadows[0], shadows[1])
        area = polygon_area(shadows[0]) + polygon_area(shadows[1])
        if len(both) >= 3:
            area -= polygon_area(both)
    else:
        return None
    return area / polygon_area(panel)


# --------------------------------------------------------------------------
# generator


def _dash_ranges(length: float, dash: float, gap: float):
    s = 0.0
    while s + dash <= length:
        yield s, s + dash
        s += dash + gap


def _strip(frame: RoadFrame, s0, s1, l_center, width, spacing) -> np.ndarray:
    ss = _axis(s0, s1, spacing)
    ll = _axis(l_center - width / 2, l_center + width / 2, spacing)
    gs, gl = np.meshgrid(ss, ll, indexing="ij")
    return frame.to_world(gs.ravel(), gl.ravel(), 0.0)


def generate_synthetic_scene(spec: SceneSpec, out_dir) -> Path:
    """Write clouds, a manifest (``scene.toml``), a sign library and
    ``ground_truth.json`` to ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    frame = spec.frame
    params = spec.model_params

    def noisy(p):
        if spec.noise > 0:
            return p + rng.normal(0.0, spec.noise, p.shape)
        return p

    lane_l = -0.5 * spec.lane_width
    ts = np.arange(0.0, spec.length + 1e-9, spec.trajectory_spacing)
    traj = frame.to_world(ts, lane_l, spec.device_height)
    write_point_cloud(out / "trajectory.xyz", traj)

    # markings: solid edges, dashed dividers, one file per cluster
    mark_files = []
    if spec.markings:
        left = -spec.lanes * spec.lane_width
        clusters = [("edge_right", _strip(frame, 0, spec.length, 0.0, spec.marking_width, spec.marking_spacing)),
                    ("edge_left", _strip(frame, 0, spec.length, left, spec.marking_width, spec.marking_spacing))]
        for lane in range(1, spec.lanes):
            lc = -lane * spec.lane_width
            for k, (a, b) in enumerate(_dash_ranges(spec.length, spec.dash_length, spec.dash_gap)):
                clusters.append((f"dash{lane}_{k:03d}", _strip(frame, a, b, lc, spec.marking_width, spec.marking_spacing)))
        for name, pts in clusters:
            rel = f"markings/{name}.xyz"
            write_point_cloud(out / rel, noisy(pts))
            mark_files.append(rel)

    env_parts = []
    if spec.ground_spacing > 0:
        lo = -spec.lanes * spec.lane_width - spec.ground_margin
        ss = _axis(0, spec.length, spec.ground_spacing)
        ll = _axis(lo, spec.ground_margin, spec.ground_spacing)
        gs, gl = np.meshgrid(ss, ll, indexing="ij")
        env_parts.append(noisy(frame.to_world(gs.ravel(), gl.ravel(), 0.0)))
    boxes = []
    for o in spec.occluders:
        local = box_surface(o.lo, o.hi, o.spacing)
        env_parts.append(noisy(frame.to_world(local[:, 0], local[:, 1], local[:, 2])))
        if frame.straight:
            c = box_corners(o.lo, o.hi)
            boxes.append(frame.to_world(c[:, 0], c[:, 1], c[:, 2]))

    posed = [pose_sign(s, frame) for s in spec.signs]
    sign_rows = []
    gt_signs = []
    for ps in posed:
        rel = f"panel_{ps.spec.id}.xyz"
        panel_pts = noisy(ps.points)
        write_point_cloud(out / rel, panel_pts)
        env_parts.append(panel_pts)
        if ps.spec.pole:
            env_parts.append(noisy(_pole(ps, frame)))
        sign_rows.append((ps.spec, rel))
        gt_signs.append(_ground_truth(spec, ps, boxes, params))

    env_files = []
    if env_parts:
        write_point_cloud(out / "environment.xyz", np.concatenate(env_parts))
        env_files.append("environment.xyz")

    _write_library(out / "library", {s.sign_type: s for s in spec.signs}, params)
    manifest = out / "scene.toml"
    manifest.write_text(_manifest_text(spec, sign_rows, mark_files, env_files))
    gt = {"straight": frame.straight, "signs": gt_signs,
          "boxes": [b.tolist() for b in boxes]}
    (out / "ground_truth.json").write_text(json.dumps(gt, indent=2) + "\n")
    return manifest


def _ground_truth(spec: SceneSpec, ps: PosedSign, boxes, params: ModelParams) -> dict:
    rows = []
    sd = ps.spec.sight_distance or spec.sight_distance or 0.0
    if spec.frame.straight and sd > 0:
        for lane in range(spec.lanes):
            l = -(lane + 0.5) * spec.lane_width
            k = 0
            while k * params.interval <= sd + 1e-9:
                s = ps.spec.station - k * params.interval
                vp = spec.frame.to_world(s, l, params.h_eye)
                ratio = analytic_occlusion_ratio(ps.outline, ps.normal, ps.center, boxes, vp)
                rows.append({"lane": lane, "d_length": k * params.interval,
                             "viewpoint": vp.tolist(), "ratio": ratio})
                k += 1
    return {"id": ps.spec.id, "type": ps.spec.sign_type, "center": ps.center.tolist(),
            "normal": ps.normal.tolist(), "outline": ps.outline.tolist(), "occlusion": rows}


def _write_library(directory: Path, types: dict, params: ModelParams) -> None:
    lines = ["# sign library: one [[type]] per panel type", ""]
    for name, s in sorted(types.items()):
        rel = f"{name}.xyz"
        write_point_cloud(directory / rel, make_panel(s.shape, s.size, s.spacing))
        lines += ["[[type]]", f'name = "{name}"', f'panel = "{rel}"',
                  "[type.sight_distance]", '"30 mph" = 45.0', '"40 mph" = 60.0', ""]
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "library.toml").write_text("\n".join(lines))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return json.dumps(str(v))


def _manifest_text(spec: SceneSpec, sign_rows, mark_files, env_files) -> str:
    lines = ["# generated synthetic scene", "", "[scene]", 'trajectory = "trajectory.xyz"',
             "environment = [" + ", ".join(json.dumps(f) for f in env_files) + "]"]
    if mark_files:
        lines.append("markings = [" + ", ".join(json.dumps(m) for m in mark_files) + "]")
    else:
        lines.append('markings = "auto-fallback"')
    lines += ['library = "library"', "", "[road]",
              f"design_speed = {json.dumps(spec.design_speed)}",
              f"v85 = {json.dumps(spec.v85)}",
              f"t_vrt = {spec.t_vrt!r}"]
    if spec.sight_distance is not None:
        lines.append(f"sight_distance = {spec.sight_distance!r}")
    extra = {"device_height": spec.device_height, **spec.params}
    lines += ["", "[params]"] + [f"{k} = {_toml_value(v)}" for k, v in extra.items()]
    for s, rel in sign_rows:
        lines += ["", "[[sign]]", f"id = {json.dumps(s.id)}", f"type = {json.dumps(s.sign_type)}",
                  f"panel = {json.dumps(rel)}", f"side = {json.dumps(s.side)}"]
        if s.sight_distance is not None:
            lines.append(f"sight_distance = {s.sight_distance!r}")
    return "\n".join(lines) + "\n"


def generate_from_file(spec_path, out_dir) -> Path:
    return generate_synthetic_scene(load_spec(spec_path), out_dir)

