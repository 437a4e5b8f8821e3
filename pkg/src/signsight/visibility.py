"""Per-viewpoint visibility: geometric, occlusion and sight-line factors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import BehindPupil, DegeneratePolygon, DegenerateStep, SignBoundaryError
from .geometry import (
    PlanarPolygon,
    alpha_shape_boundary,
    central_footprints,
    points_in_polygon,
    polygon_area,
    polygon_centroid,
    retinal_area,
    view_transform,
    ViewTransform,
)
from .scene import MPH, ModelParams, PointCloud, SignLibraryEntry
from .spatial import GridIndex
from .viewpoints import LaneGrid

log = logging.getLogger(__name__)

CONE_EPS = 1e-12
CANDIDATE_SLACK = 0.1


@dataclass(frozen=True, eq=False)
class ViewFrame:
    """Panel and environment seen from one viewpoint.

    The frame puts the panel center at the origin and the viewpoint at
    ``(0, 0, distance)``. ``polygon`` outlines the panel's central projection
    (from the eye) onto z = 0.
    """

    transform: ViewTransform
    panel_view: np.ndarray
    panel_normal: np.ndarray
    polygon: PlanarPolygon
    d_max: float
    cone_angle: float
    environment: np.ndarray
    env_index: GridIndex | None
    reach: float

    @property
    def distance(self) -> float:
        return self.transform.distance

    @property
    def viewpoint(self) -> np.ndarray:
        return self.transform.eye

    @property
    def eye_world(self) -> np.ndarray:
        return self.transform.rotation.inverse().apply(self.viewpoint[None, :])[0] + self.transform.center


def build_view_frame(sign, environment, vp, params: ModelParams, env_index: GridIndex | None = None) -> ViewFrame:
    """Rigidly move the scene so the panel center sits at the origin and the
    viewpoint on +z, then outline the panel's projection with an alpha shape."""
    center = sign.center
    panel = sign.panel.points
    vt = view_transform(center, vp)
    pv = vt.to_view(panel)
    foot = central_footprints(pv, vt.distance)
    try:
        poly = alpha_shape_boundary(foot, params.d_alpha)
    except DegeneratePolygon as exc:
        raise SignBoundaryError(f"sign {sign.id}: cannot outline the panel: {exc}") from None
    d_max = float(np.max(np.hypot(poly.vertices[:, 0], poly.vertices[:, 1])))
    phi = math.atan2(d_max, vt.distance)
    normal = vt.rotation.apply(sign.normal(vp)[None, :])[0]
    if isinstance(environment, PointCloud):
        env = environment.points
    elif hasattr(environment, "environment"):
        env = environment.environment.points
    else:
        env = np.asarray(environment, float).reshape(-1, 3)
    reach = float(np.max(np.linalg.norm(panel - center, axis=1)))
    return ViewFrame(vt, pv, normal, poly, d_max, phi, env, env_index, reach)


def geometric_factor(frame: ViewFrame, entry: SignLibraryEntry, params: ModelParams) -> tuple[float, float]:
    """``(E_geo, A_view)``: retinal area of the panel outline over the
    library's standard area."""
    if frame.distance <= params.d_retina:
        raise BehindPupil("viewpoint is closer to the panel than the retina distance")
    a_view = retinal_area(frame.polygon, frame.distance, params.d_retina)
    return a_view / entry.standard_area, a_view


# --------------------------------------------------------------------------
# occlusion


@dataclass(frozen=True, eq=False)
class OcclusionResult:
    area: float
    occluders: np.ndarray
    footprints: np.ndarray
    centroid: np.ndarray | None
    distribution: float
    source_index: np.ndarray

    @property
    def empty(self) -> bool:
        return len(self.footprints) == 0


def _candidates(frame: ViewFrame) -> np.ndarray:
    env = frame.environment
    if len(env) == 0:
        return np.zeros(0, dtype=np.int64)
    if frame.env_index is None:
        return np.arange(len(env))
    c = frame.transform.center
    axis = c - frame.eye_world
    # rays through the panel outline meet the panel plane within ``reach`` of
    # the center, so the cone never needs to run further than that
    length = frame.distance + frame.reach + CANDIDATE_SLACK
    end = frame.eye_world + axis / frame.distance * length
    radius = length * math.tan(frame.cone_angle) + CANDIDATE_SLACK
    return frame.env_index.query_cone(frame.eye_world, end, radius)


def occluding_points(frame: ViewFrame, idx: np.ndarray | None = None):
    """Cone test plus the in-front-of-panel test; returns ``(index,
    footprints)`` for environment points whose panel-plane footprint lies in
    the panel outline."""
    if idx is None:
        idx = _candidates(frame)
    if len(idx) == 0:
        return idx, np.zeros((0, 2))
    q = frame.transform.to_view(frame.environment[idx])
    D = frame.distance
    depth = D - q[:, 2]
    tau = np.arctan2(np.hypot(q[:, 0], q[:, 1]), depth)
    n = frame.panel_normal
    side_eye = n[2] * D
    between = (q @ n) * side_eye > 0
    keep = (depth > 0) & between & (tau <= frame.cone_angle + CONE_EPS)
    if not keep.any():
        return idx[:0], np.zeros((0, 2))
    q, idx = q[keep], idx[keep]
    foot = central_footprints(q, D)
    inside = points_in_polygon(foot, frame.polygon)
    return idx[inside], foot[inside]


def _clusters(foot: np.ndarray, link: float) -> np.ndarray:
    """Single-linkage labels at distance ``link``.

    The Euclidean minimum spanning tree lives inside the Delaunay graph, so
    short Delaunay edges give the same components as all short pairs.
    """
    n = len(foot)
    try:
        tri = Delaunay(foot)
    except (QhullError, ValueError):
        pairs = cKDTree(foot).query_pairs(link, output_type="ndarray")
    else:
        s = tri.simplices
        e = np.concatenate([s[:, [0, 1]], s[:, [1, 2]], s[:, [2, 0]]])
        if len(tri.coplanar):
            # duplicates left out of the triangulation join their nearest vertex
            e = np.concatenate([e, tri.coplanar[:, [0, 2]]])
        d = np.linalg.norm(foot[e[:, 0]] - foot[e[:, 1]], axis=1)
        pairs = e[d <= link]
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    return labels


def extract_occlusion(frame: ViewFrame, params: ModelParams) -> OcclusionResult:
    """Occluded part of the panel as seen from the frame's viewpoint.

    Footprints are split into clusters (single linkage at ``2 * d_alpha``);
    each cluster's alpha-shape area is projected to the retina and summed.
    The occlusion centroid is the area-weighted centroid of the cluster
    outlines.
    """
    idx, foot = occluding_points(frame)
    if len(idx) == 0:
        return OcclusionResult(0.0, np.zeros((0, 3)), foot, None, 0.0, idx)
    labels = _clusters(foot, 2.0 * params.d_alpha)
    total, moment = 0.0, np.zeros(2)
    plane_area = 0.0
    for lab in range(labels.max() + 1):
        pts = foot[labels == lab]
        if len(pts) < 3:
            continue
        try:
            poly = alpha_shape_boundary(pts, params.d_alpha)
        except DegeneratePolygon:
            continue
        a = polygon_area(poly)
        plane_area += a
        moment += a * polygon_centroid(poly)
        total += retinal_area(poly, frame.distance, params.d_retina)
    if plane_area > 0:
        centroid = moment / plane_area
        dist = float(np.clip(1.0 - np.hypot(*centroid) / frame.d_max, 0.0, 1.0))
    else:
        centroid, dist = None, 0.0
    return OcclusionResult(total, frame.environment[idx], foot, centroid, dist, idx)


def occlusion_factor(occ: OcclusionResult | tuple, a_view: float, params: ModelParams) -> tuple[float, float]:
    """``(E_od, E_occ)`` from the occluded area ratio and its distribution.

    ``occ`` may also be a plain ``(area, distribution)`` pair.
    """
    if not a_view > 0:
        raise ValueError("A_view must be > 0")
    if isinstance(occ, OcclusionResult):
        area, dist = occ.area, occ.distribution
    else:
        area, dist = occ
    if area <= 0:
        return 0.0, 1.0
    ratio = area / a_view
    if ratio > 1.0:
        log.warning("occluded area exceeds the view area (ratio %.4f); clamped to 1", ratio)
        ratio = 1.0
    e_od = params.alpha * ratio + params.beta * dist * ratio
    return e_od, math.exp(-params.lam * e_od)


# --------------------------------------------------------------------------
# sight line


def gfov(speed: float) -> float:
    """Geometric field of view in radians for a speed in m/s: 85 deg at
    30 mph, 55 deg at 60 mph, linear in between and beyond, clamped to
    [10, 170] deg."""
    if not speed > 0:
        raise ValueError("speed must be > 0")
    mph = speed / MPH
    deg = min(170.0, max(10.0, 85.0 - (mph - 30.0)))
    return math.radians(deg)


def sight_line_factor(v_a: float, v_f: float, eta: float) -> float:
    """Sight-line deviation factor; full credit inside half the field of view,
    exponential decay up to a right angle, zero beyond."""
    half = 0.5 * v_f
    if v_a < half:
        return 1.0
    if v_a > math.pi / 2 + 1e-9:
        return 0.0
    return math.exp(-eta * (v_a - half) / half)


def _angle(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= 1e-12 or nv <= 1e-12:
        raise DegenerateStep("zero-length sight vector")
    c = float(np.dot(u, v) / (nu * nv))
    return math.acos(max(-1.0, min(1.0, c)))


def sight_direction(column: np.ndarray, j: int) -> np.ndarray:
    """Travel direction at viewpoint ``j``: toward ``j + 1``, or from
    ``j - 1`` for the last viewpoint."""
    n = len(column)
    if n < 2:
        raise DegenerateStep("a single viewpoint has no travel direction")
    if j < n - 1:
        return column[j + 1] - column[j]
    return column[j] - column[j - 1]


def sight_deviation_angle(grid: LaneGrid, i: int, j: int, sign_center) -> float:
    col = grid.points[i]
    return _angle(sight_direction(col, j), np.asarray(sign_center, float) - col[j])


# --------------------------------------------------------------------------
# per-viewpoint record


@dataclass(frozen=True)
class VisibilityRecord:
    lane: int
    column: int
    e_geo: float
    e_occ: float
    e_sight: float
    e_visibility: float
    a_view: float
    a_occ: float
    occlusion_ratio: float
    distribution: float
    sight_angle: float
    d_length: float
    d_width: float
    n_occluders: int = 0


def viewpoint_visibility(frame: ViewFrame, grid: LaneGrid, i: int, j: int,
                         params: ModelParams, entry: SignLibraryEntry, sign_center=None) -> VisibilityRecord:
    """Visibility of the sign from viewpoint ``(i, j)`` and its factors."""
    e_geo, a_view = geometric_factor(frame, entry, params)
    occ = extract_occlusion(frame, params)
    e_od, e_occ = occlusion_factor(occ, a_view, params)
    if sign_center is None:
        sign_center = frame.transform.center
    v_a = sight_deviation_angle(grid, i, j, sign_center)
    if params.v85 is None:
        raise ValueError("v85 is required for the actual field of view")
    e_sight = sight_line_factor(v_a, gfov(params.v85), params.eta)
    ratio = min(occ.area / a_view, 1.0) if a_view > 0 else 0.0
    return VisibilityRecord(
        lane=i, column=j, e_geo=e_geo, e_occ=e_occ, e_sight=e_sight,
        e_visibility=e_geo * e_occ * e_sight, a_view=a_view, a_occ=occ.area,
        occlusion_ratio=ratio, distribution=occ.distribution, sight_angle=v_a,
        d_length=float(grid.d_length[i, j]), d_width=float(grid.d_width[i, j]),
        n_occluders=len(occ.source_index),
    )
