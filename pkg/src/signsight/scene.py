"""Scene data model: point clouds, trajectory, signs, markings, parameters and
the sign library."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegeneratePanel, DegeneratePolygon, SignBoundaryError, ValidationError
from .geometry import (
    alpha_shape_boundary,
    central_footprints,
    points_in_polygon,
    polygon_centroid,
    retinal_area,
    view_transform,
)
from .polyline import Polyline

MPH = 0.44704
KMH = 1.0 / 3.6
PANEL_RMS_LIMIT = 0.05

_SPEED_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*(mph|km/h|kmh|kph|m/s)?\s*$")


def parse_speed(value, *, require_unit: bool = False) -> float:
    """Convert ``"25 mph"``, ``"40 km/h"`` or ``"11.2 m/s"`` to m/s. Bare
    numbers are m/s unless ``require_unit``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if require_unit:
            raise ValueError(f"speed {value!r} needs a unit tag (mph, km/h or m/s)")
        return float(value)
    m = _SPEED_RE.match(str(value))
    if not m:
        raise ValueError(f"cannot parse speed {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if unit is None:
        if require_unit:
            raise ValueError(f"speed {value!r} needs a unit tag (mph, km/h or m/s)")
        return num
    if unit == "mph":
        return num * MPH
    if unit in ("km/h", "kmh", "kph"):
        return num * KMH
    return num


def mps_to_mph(v: float) -> float:
    return v / MPH


# --------------------------------------------------------------------------
# point clouds and road geometry


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        if self.intensity is not None:
            i = np.ascontiguousarray(self.intensity, dtype=float).reshape(-1)
            if len(i) != len(p):
                raise ValueError("intensity length differs from point count")
            i.flags.writeable = False
            object.__setattr__(self, "intensity", i)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask_or_index) -> "PointCloud":
        inten = None if self.intensity is None else self.intensity[mask_or_index]
        return PointCloud(self.points[mask_or_index], inten)

    @classmethod
    def concat(cls, clouds) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls(np.zeros((0, 3)))
        pts = np.concatenate([c.points for c in clouds])
        if all(c.intensity is not None for c in clouds):
            return cls(pts, np.concatenate([c.intensity for c in clouds]))
        return cls(pts)


class Trajectory(Polyline):
    """Vehicle path in driving order."""

    def __init__(self, points):
        try:
            super().__init__(points)
        except ValueError as exc:
            raise ValidationError(f"invalid trajectory: {exc}") from None

    def nearest_index(self, point) -> int:
        """Index of the trajectory point nearest ``point`` in plan view."""
        _, i = self._kdtree().query(np.asarray(point, float)[:2])
        return int(i)

    def median_spacing(self) -> float:
        return float(np.median(self.seglen))


def plane_fit_center(panel: PointCloud, toward=None):
    """Least-squares plane through a panel cloud.

    Returns ``(center, normal, rms)``: the centroid, the unit normal (flipped to
    face ``toward`` when given) and the RMS point-to-plane residual.
    """
    pts = panel.points if isinstance(panel, PointCloud) else np.asarray(panel, float)
    if len(pts) < 3:
        raise DegeneratePanel("panel needs at least 3 points")
    center = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - center, full_matrices=False)
    if len(s) < 3 or s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegeneratePanel("panel points are collinear")
    normal = vt[2]
    if toward is not None and np.dot(np.asarray(toward, float) - center, normal) < 0:
        normal = -normal
    rms = float(s[2] / math.sqrt(len(pts)))
    return center, normal, rms


@dataclass(frozen=True, eq=False)
class SignInstance:
    id: str
    sign_type: str
    panel: PointCloud
    side: str = "right"
    sight_distance: float | None = None
    center: np.ndarray = field(init=False)
    rms: float = field(init=False)

    def __post_init__(self):
        if self.side not in ("right", "overhead"):
            raise ValidationError(f"sign {self.id}: side must be 'right' or 'overhead'")
        if len(self.panel) == 0:
            raise ValidationError(f"sign {self.id}: empty panel cloud")
        if self.sight_distance is not None and not self.sight_distance > 0:
            raise ValidationError(f"sign {self.id}: sight distance must be positive")
        try:
            center, _, rms = plane_fit_center(self.panel)
        except DegeneratePanel as exc:
            raise ValidationError(f"sign {self.id}: {exc}") from None
        if rms >= PANEL_RMS_LIMIT:
            raise ValidationError(
                f"sign {self.id}: panel is not planar (rms {rms:.3f} m >= {PANEL_RMS_LIMIT} m)"
            )
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "rms", rms)

    def normal(self, toward=None) -> np.ndarray:
        return plane_fit_center(self.panel, toward)[1]


@dataclass(frozen=True, eq=False)
class MarkingCluster:
    cloud: PointCloud
    kind: str = "unknown"
    length: float | None = None
    name: str = ""


# --------------------------------------------------------------------------
# parameters

_DEG_KEYS = {"depression_deg": "depression", "pass_angle_deg": "pass_angle"}
_SPEED_KEYS = {"v85", "v_design"}
_RUN_MODES = ("segments", "cells")


@dataclass(frozen=True)
class ModelParams:
    """Every scalar of the model; lengths in meters, angles in radians,
    speeds in m/s. Defaults follow the published parameter table."""

    alpha: float = 0.8
    beta: float = 0.2
    lam: float = 6.0
    eta: float = 6.0
    gamma: float = 1.0
    delta: float = 0.0
    sigma: float = 0.71
    d_standard: float = 2.0
    d_retina: float = 0.017
    d_alpha: float = 0.1
    h_eye: float = 1.2
    d_lane: float = 3.5
    w_shoulder: float = 0.5
    mount_height: float = 2.0
    mount_height_overhead: float = 4.75
    depression: float = math.radians(15.0)
    pass_angle: float = math.radians(22.5)
    v85: float | None = None
    v_design: float | None = None
    t_vrt: float | None = None
    interval: float = 2.0
    interval_points: int | None = None
    band_width: float = 2.0
    band_low: float = 0.3
    band_high: float = 3.0
    marking_half_height: float = 1.0
    marking_margin: float = 0.1
    slice_thickness: float = 0.5
    solid_length: float = 30.0
    device_height: float = 2.0
    fallback_half_width: float = 1.75
    panel_exclusion: float = 0.05
    run_length: str = "segments"
    e_other: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        problems = []
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            problems.append(f"alpha + beta must equal 1 (got {self.alpha + self.beta:g})")
        if abs(self.gamma + self.delta - 1.0) > 1e-9:
            problems.append(f"gamma + delta must equal 1 (got {self.gamma + self.delta:g})")
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            problems.append("weights alpha, beta, gamma, delta must be non-negative")
        if not self.lam >= 6:
            problems.append(f"lam must be >= 6 (got {self.lam:g})")
        if not self.eta > 0:
            problems.append("eta must be > 0")
        if not 0 < self.sigma < 1:
            problems.append(f"sigma must lie in (0, 1) (got {self.sigma:g})")
        if not 0 < self.d_standard <= 3:
            problems.append(f"d_standard must lie in (0, 3] m (got {self.d_standard:g})")
        for name in (
            "d_retina", "d_alpha", "d_lane", "interval", "band_width",
            "band_high", "marking_half_height", "slice_thickness", "solid_length",
            "mount_height", "mount_height_overhead", "panel_exclusion",
        ):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("h_eye", "w_shoulder", "band_low", "marking_margin",
                     "device_height", "fallback_half_width"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be >= 0")
        if self.band_low >= self.band_high:
            problems.append("band_low must be below band_high")
        for name in ("v85", "v_design", "t_vrt"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                problems.append(f"{name} must be > 0")
        if self.interval_points is not None and self.interval_points < 1:
            problems.append("interval_points must be >= 1")
        if self.run_length not in _RUN_MODES:
            problems.append(f"run_length must be one of {_RUN_MODES}")
        if problems:
            raise ValidationError("; ".join(problems))

    def with_overrides(self, values: Mapping[str, object], source=None) -> "ModelParams":
        """Return a copy with overrides applied. Accepts ``*_deg`` keys for the
        two mounting angles and unit-tagged speed strings."""
        known = {f.name: f for f in fields(self)}
        changes: dict[str, object] = {}
        for key, raw in values.items():
            line = None
            if isinstance(raw, tuple):
                raw, line = raw
            try:
                if key in _DEG_KEYS:
                    changes[_DEG_KEYS[key]] = math.radians(float(raw))
                elif key in _SPEED_KEYS:
                    changes[key] = parse_speed(raw)
                elif key in ("interval_points",):
                    changes[key] = None if raw in (None, "", "none") else int(raw)
                elif key == "run_length":
                    changes[key] = str(raw)
                elif key in known:
                    changes[key] = None if raw in (None, "none") else float(raw)
                else:
                    raise ValidationError(f"unknown parameter {key!r}", source, line)
            except ValidationError:
                raise
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"parameter {key!r}: {exc}", source, line) from None
        try:
            return replace(self, **changes)
        except ValidationError as exc:
            raise ValidationError(exc.message, source) from None


# --------------------------------------------------------------------------
# sign library


def make_panel(shape: str, size: float, spacing: float = 0.02) -> np.ndarray:
    """Canonical panel points: center at the origin, face in the xz-plane
    (normal +y). ``size`` is the side for squares/triangles and the diameter
    for circles. The outline is sampled at ``spacing`` as well as the
    interior grid so alpha-shape boundaries land on the true edge."""
    outline = panel_outline(shape, size)
    # interior grid
    half = size / 2.0
    g = np.arange(-half, half + 1e-12, spacing)
    gx, gz = np.meshgrid(g, g, indexing="ij")
    grid = np.column_stack([gx.ravel(), gz.ravel()])
    grid = grid[points_in_polygon(grid, outline, tol=1e-9)]
    # dense outline samples
    ring = []
    nv = len(outline)
    for k in range(nv):
        a, b = outline[k], outline[(k + 1) % nv]
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.arange(n) / n
        ring.append(a + t[:, None] * (b - a))
    ring = np.concatenate(ring)
    pts2 = np.concatenate([ring, grid])
    # drop near-duplicates between grid and ring
    keep = np.ones(len(pts2), dtype=bool)
    tree = cKDTree(pts2)
    for i, j in sorted(tree.query_pairs(spacing * 0.25)):
        if keep[i] and keep[j]:
            keep[j] = False
    pts2 = pts2[keep]
    pts2 = pts2 - polygon_centroid(outline)
    return np.column_stack([pts2[:, 0], np.zeros(len(pts2)), pts2[:, 1]])


def panel_outline(shape: str, size: float) -> np.ndarray:
    """Analytic outline (in face coordinates) used for synthetic panels."""
    if shape == "square":
        h = size / 2.0
        return np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    if shape == "circle":
        n = 256
        t = 2 * np.pi * np.arange(n) / n
        return 0.5 * size * np.column_stack([np.cos(t), np.sin(t)])
    if shape == "triangle":
        h = size * math.sqrt(3) / 2
        tri = np.array([[-size / 2, 0.0], [size / 2, 0.0], [0.0, h]])
        return tri - tri.mean(axis=0)
    raise ValueError(f"unknown panel shape {shape!r}")


def standard_area(panel, params: ModelParams) -> float:
    """Retinal area of a canonical panel (center origin, normal +y) viewed
    frontally from ``d_standard`` along its normal."""
    pts = panel.points if isinstance(panel, PointCloud) else np.asarray(panel, float)
    center = pts.mean(axis=0)
    vp = center + np.array([0.0, params.d_standard, 0.0])
    vt = view_transform(center, vp)
    foot = central_footprints(vt.to_view(pts), vt.distance)
    try:
        poly = alpha_shape_boundary(foot, params.d_alpha)
    except DegeneratePolygon as exc:
        raise SignBoundaryError(f"cannot outline library panel: {exc}") from None
    return retinal_area(poly, vt.distance, params.d_retina)


@dataclass(frozen=True, eq=False)
class SignLibraryEntry:
    sign_type: str
    panel: PointCloud
    standard_area: float
    mount_height: float | None = None
    sight_distance: Mapping[float, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.standard_area > 0:
            raise ValidationError(f"library type {self.sign_type}: standard area must be > 0")

    def sight_distance_for(self, design_speed: float | None) -> float | None:
        """SD listed for the design speed (m/s), matched to 0.05 m/s."""
        if design_speed is None:
            return None
        for v, sd in self.sight_distance.items():
            if abs(v - design_speed) < 0.05:
                return sd
        return None


BUILTIN_TYPES = {
    "square600": ("square", 0.6),
    "circle600": ("circle", 0.6),
    "triangle700": ("triangle", 0.7),
}


class SignLibrary(dict):
    """Mapping ``sign_type -> SignLibraryEntry``."""

    def __init__(self, entries=(), source: str = "builtin"):
        super().__init__((e.sign_type, e) for e in entries)
        self.source = source

    def entry(self, sign_type: str) -> SignLibraryEntry:
        try:
            return self[sign_type]
        except KeyError:
            raise ValidationError(
                f"sign type {sign_type!r} not found in sign library ({self.source})"
            ) from None

    @classmethod
    def builtin(cls, params: ModelParams | None = None, spacing: float = 0.02) -> "SignLibrary":
        params = params or ModelParams()
        sd = {30 * MPH: 45.0, 40 * MPH: 60.0}
        entries = []
        for name, (shape, size) in BUILTIN_TYPES.items():
            pc = PointCloud(make_panel(shape, size, spacing))
            entries.append(SignLibraryEntry(name, pc, standard_area(pc, params), None, sd))
        return cls(entries, "builtin")
