"""Geometric primitives: quaternion rotations, planar polygons, alpha shapes
and the pinhole retina.

Conventions
-----------
- Quaternions are stored as ``(w, x, y, z)``.
- Angles are radians.
- 2D polygons are ``(n, 2)`` arrays, counter-clockwise once built by
  :func:`alpha_shape_boundary`; the closing vertex is not repeated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError

from .errors import BehindPupil, DegeneratePolygon, NoIntersection

EDGE_TOL = 1e-9
_PARALLEL_TOL = 1e-12


# --------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion rotation."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be non-zero and finite")
        object.__setattr__(self, "q", q / n)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        return cls(np.concatenate([[np.cos(half)], np.sin(half) * axis]))

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, points) -> np.ndarray:
        """Rotate a single 3-vector or an ``(n, 3)`` array."""
        p = np.asarray(points, dtype=float)
        return p @ self.matrix().T

    def inverse(self) -> "Rotation":
        w, x, y, z = self.q
        return Rotation(np.array([w, -x, -y, -z]))

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation(
            np.array(
                [
                    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
                ]
            )
        )


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("direction must be non-zero and finite")
    return v / n


def rotation_aligning(from_dir, to_dir) -> Rotation:
    """Shortest rotation taking ``from_dir`` onto ``to_dir``.

    Antiparallel inputs turn by pi about ``from_dir x e_x`` (or ``x e_y`` when
    ``from_dir`` lies along x), so the result is deterministic. Axis and angle
    come from the cross product and ``atan2``, which stay accurate close to
    the antiparallel case.
    """
    a = _unit(from_dir)
    b = _unit(to_dir)
    c = np.cross(a, b)
    sin = float(np.linalg.norm(c))
    cos = float(np.dot(a, b))
    if sin < 1e-12:
        if cos > 0:
            return Rotation.identity()
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis = axis / np.linalg.norm(axis)
        return Rotation(np.concatenate([[0.0], axis]))
    half = 0.5 * math.atan2(sin, cos)
    return Rotation(np.concatenate([[math.cos(half)], math.sin(half) * c / sin]))


# --------------------------------------------------------------------------
# planar polygons


@dataclass(frozen=True)
class PlanarPolygon:
    """Simple polygon in a plane.

    ``index`` maps each vertex back to the point set it was built from, or is
    ``None`` for hand-made polygons.
    """

    vertices: np.ndarray
    index: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise DegeneratePolygon("polygon needs at least 3 planar vertices")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return polygon_area(self)


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly) -> float:
    """Shoelace area, independent of orientation."""
    v = poly.vertices if isinstance(poly, PlanarPolygon) else np.asarray(poly, float)
    return abs(_signed_area(v))


def polygon_centroid(poly) -> np.ndarray:
    v = poly.vertices if isinstance(poly, PlanarPolygon) else np.asarray(poly, float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-300:
        return v.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def points_in_polygon(points, poly, tol: float = EDGE_TOL) -> np.ndarray:
    """Vectorised crossing-number test; points within ``tol`` of an edge count
    as inside."""
    v = poly.vertices if isinstance(poly, PlanarPolygon) else np.asarray(poly, float)
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if len(p) == 0:
        return np.zeros(0, dtype=bool)
    px = p[:, 0:1]
    py = p[:, 1:2]
    x0, y0 = v[:, 0][None, :], v[:, 1][None, :]
    x1, y1 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]

    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    inside = np.count_nonzero(straddle & (px < xcross), axis=1) % 2 == 1

    ex, ey = x1 - x0, y1 - y0
    len2 = ex * ex + ey * ey
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(((px - x0) * ex + (py - y0) * ey) / len2, 0.0, 1.0)
    t = np.where(len2 > 0, t, 0.0)
    dx = px - (x0 + t * ex)
    dy = py - (y0 + t * ey)
    on_edge = np.any(dx * dx + dy * dy <= tol * tol, axis=1)
    return inside | on_edge


def point_in_polygon(p, poly, tol: float = EDGE_TOL) -> bool:
    """Boundary-inclusive point-in-polygon test for a single 2D point."""
    return bool(points_in_polygon(np.asarray(p, float).reshape(1, 2), poly, tol)[0])


# --------------------------------------------------------------------------
# alpha shapes


def _circumradii(tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.linalg.norm(tri[:, 1] - tri[:, 2], axis=1)
    b = np.linalg.norm(tri[:, 2] - tri[:, 0], axis=1)
    c = np.linalg.norm(tri[:, 0] - tri[:, 1], axis=1)
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a * b * c / (2.0 * np.abs(area2))
    return r, area2


def _trace_loops(edges: np.ndarray, pts: np.ndarray) -> list[list[int]]:
    """Split directed boundary edges into closed loops.

    At a pinch vertex the outgoing edge with the smallest clockwise turn from
    the reversed incoming edge is taken, which keeps every loop simple.
    """
    out: dict[int, list[int]] = {}
    for s, t in edges:
        out.setdefault(int(s), []).append(int(t))
    loops = []
    remaining = len(edges)
    while remaining:
        start = next(s for s, ts in out.items() if ts)
        loop = [start]
        prev, cur = start, out[start].pop()
        remaining -= 1
        while cur != start:
            loop.append(cur)
            cands = out.get(cur, [])
            if not cands:
                break
            if len(cands) == 1:
                nxt = cands.pop()
            else:
                back = pts[prev] - pts[cur]
                a0 = np.arctan2(back[1], back[0])
                best, best_ang = 0, np.inf
                for k, c in enumerate(cands):
                    d = pts[c] - pts[cur]
                    ang = (a0 - np.arctan2(d[1], d[0])) % (2 * np.pi)
                    if ang == 0.0:
                        ang = 2 * np.pi
                    if ang < best_ang:
                        best, best_ang = k, ang
                nxt = cands.pop(best)
            remaining -= 1
            prev, cur = cur, nxt
        if len(loop) >= 3:
            loops.append(loop)
    return loops


def alpha_shape_boundary(points2d, alpha: float) -> PlanarPolygon:
    """Outer boundary of the largest connected piece of the alpha shape.

    Delaunay triangles whose circumradius exceeds ``alpha`` are dropped; the
    survivors are grouped by shared edges and the outer loop of the component
    with the largest area is returned (holes ignored). Vertices are input
    points; ``index`` holds their positions in ``points2d``.
    """
    pts = np.asarray(points2d, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DegeneratePolygon("alpha shape needs at least 3 points")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    try:
        dl = Delaunay(pts)
    except (QhullError, ValueError) as exc:
        raise DegeneratePolygon(f"points are collinear or coincident: {exc}") from None

    simp = dl.simplices.copy()
    nbr = dl.neighbors.copy()
    r, area2 = _circumradii(pts[simp])
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-300)
    keep = (np.abs(area2) > 1e-12 * scale * scale) & (r <= alpha)
    if not keep.any():
        raise DegeneratePolygon("no triangle passes the alpha test")

    cw = area2 < 0
    simp[cw] = simp[cw][:, [0, 2, 1]]
    nbr[cw] = nbr[cw][:, [0, 2, 1]]

    # triangle adjacency restricted to kept triangles
    kept_idx = np.flatnonzero(keep)
    t_rows = np.repeat(kept_idx, 3)
    t_cols = nbr[kept_idx].ravel()
    ok = t_cols >= 0
    ok[ok] = keep[t_cols[ok]]
    n = len(simp)
    adj = coo_matrix(
        (np.ones(ok.sum()), (t_rows[ok], t_cols[ok])), shape=(n, n)
    )
    _, labels = connected_components(adj, directed=False)
    tri_area = np.where(keep, 0.5 * np.abs(area2), 0.0)
    comp_area = np.bincount(labels, weights=tri_area)
    in_comp = keep & (labels == int(np.argmax(comp_area)))

    comp_idx = np.flatnonzero(in_comp)
    edges = []
    for e in range(3):
        nb = nbr[comp_idx, e]
        boundary = (nb < 0) | ~in_comp[np.where(nb < 0, 0, nb)]
        tids = comp_idx[boundary]
        edges.append(np.column_stack([simp[tids, (e + 1) % 3], simp[tids, (e + 2) % 3]]))
    edges = np.concatenate(edges)
    loops = _trace_loops(edges, pts)
    if not loops:
        raise DegeneratePolygon("alpha shape has no closed boundary")
    areas = [_signed_area(pts[lp]) for lp in loops]
    outer = loops[int(np.argmax(areas))]
    if max(areas) <= 0:
        raise DegeneratePolygon("alpha shape boundary has zero area")
    idx = np.asarray(outer, dtype=int)
    return PlanarPolygon(pts[idx], idx)


# --------------------------------------------------------------------------
# projections


def ray_plane_xy_intersection(origin, through) -> np.ndarray:
    """Where the line from ``origin`` through ``through`` meets z = 0."""
    o = np.asarray(origin, dtype=float)
    t = np.asarray(through, dtype=float)
    dz = t[2] - o[2]
    if abs(dz) < _PARALLEL_TOL:
        raise NoIntersection("ray is parallel to the xOy plane")
    s = -o[2] / dz
    return o[:2] + s * (t[:2] - o[:2])


def rays_plane_xy(origin, through) -> np.ndarray:
    """Vectorised :func:`ray_plane_xy_intersection`; rows parallel to the plane
    come back as NaN."""
    o = np.asarray(origin, dtype=float)
    t = np.atleast_2d(np.asarray(through, dtype=float))
    dz = t[:, 2] - o[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(np.abs(dz) < _PARALLEL_TOL, np.nan, -o[2] / dz)
    return o[:2] + s[:, None] * (t[:, :2] - o[:2])


def retinal_projection(points_view_frame, retina_distance: float) -> np.ndarray:
    """Pinhole image of points given relative to the pupil, which looks down -z.

    Returns ``(x f/|z|, y f/|z|)`` per point with ``f = retina_distance``.
    """
    p = np.atleast_2d(np.asarray(points_view_frame, dtype=float))
    f = float(retina_distance)
    depth = -p[:, 2]
    if np.any(depth <= f):
        raise BehindPupil("point lies at or behind the pupil")
    return p[:, :2] * (f / depth)[:, None]


# --------------------------------------------------------------------------
# view frame helpers


@dataclass(frozen=True)
class ViewTransform:
    """Rigid map taking ``center`` to the origin and the center->viewpoint
    line onto +z; the viewpoint lands on ``(0, 0, distance)``."""

    rotation: Rotation
    center: np.ndarray
    distance: float

    def to_view(self, points) -> np.ndarray:
        return self.rotation.apply(np.asarray(points, dtype=float) - self.center)

    @property
    def eye(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.distance])


def view_transform(center, viewpoint) -> ViewTransform:
    c = np.asarray(center, dtype=float).reshape(3)
    line = np.asarray(viewpoint, dtype=float).reshape(3) - c
    dist = float(np.linalg.norm(line))
    if dist == 0.0:
        raise ValueError("viewpoint coincides with the panel center")
    return ViewTransform(rotation_aligning(line, [0.0, 0.0, 1.0]), c, dist)


def central_footprints(points_view, distance: float) -> np.ndarray:
    """Project view-frame points from the eye at ``(0, 0, distance)`` onto
    z = 0. Points at or behind the eye raise :class:`BehindPupil`."""
    p = np.atleast_2d(np.asarray(points_view, dtype=float))
    depth = distance - p[:, 2]
    if np.any(depth <= 0.0):
        raise BehindPupil("point lies at or behind the eye")
    return p[:, :2] * (distance / depth)[:, None]


def retinal_area(poly, distance: float, retina_distance: float) -> float:
    """Retinal image area of a polygon lying in z = 0 seen from
    ``(0, 0, distance)``."""
    v = poly.vertices if isinstance(poly, PlanarPolygon) else np.asarray(poly, float)
    rel = np.column_stack([v, np.full(len(v), -float(distance))])
    return polygon_area(retinal_projection(rel, retina_distance))
