"""Plan-view polyline parametrisation: stations, projection, offsetting."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class Polyline:
    """Ordered 3D vertices parametrised by plan-view (xy) arc length.

    Lateral offsets are signed positive to the *right* of the travel
    direction, i.e. of increasing station.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("polyline needs at least 2 points of shape (n, 3)")
        seg = np.diff(pts[:, :2], axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seglen <= 0):
            raise ValueError("consecutive polyline points coincide in plan view")
        self.points = pts
        self.seglen = seglen
        self.stations = np.concatenate([[0.0], np.cumsum(seglen)])
        self._tree = None

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return float(self.stations[-1])

    def _kdtree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points[:, :2])
        return self._tree

    def project(self, points):
        """Return ``(station, lateral, segment)`` of each point's plan-view
        foot on the polyline."""
        p = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
        _, vi = self._kdtree().query(p)
        nseg = len(self.seglen)
        best_d = np.full(len(p), np.inf)
        best_s = np.zeros(len(p))
        best_l = np.zeros(len(p))
        best_k = np.zeros(len(p), dtype=int)
        for off in (-1, 0):
            k = np.clip(vi + off, 0, nseg - 1)
            a = self.points[k, :2]
            d = self.points[k + 1, :2] - a
            L = self.seglen[k]
            rel = p - a
            t = (rel[:, 0] * d[:, 0] + rel[:, 1] * d[:, 1]) / (L * L)
            # the first and last segments extend beyond the ends
            lo = np.where(k == 0, -np.inf, 0.0)
            hi = np.where(k == nseg - 1, np.inf, 1.0)
            t = np.clip(t, lo, hi)
            foot = a + t[:, None] * d
            dist = np.hypot(*(p - foot).T)
            lat = (d[:, 1] * rel[:, 0] - d[:, 0] * rel[:, 1]) / L
            better = dist < best_d
            best_d = np.where(better, dist, best_d)
            best_s = np.where(better, self.stations[k] + t * L, best_s)
            best_l = np.where(better, lat, best_l)
            best_k = np.where(better, k, best_k)
        return best_s, best_l, best_k

    def tangent(self, station) -> np.ndarray:
        """Unit plan-view travel direction at ``station`` (per segment)."""
        s = np.atleast_1d(np.asarray(station, dtype=float))
        k = np.clip(np.searchsorted(self.stations, s, side="right") - 1, 0, len(self.seglen) - 1)
        d = self.points[k + 1, :2] - self.points[k, :2]
        return d / self.seglen[k][:, None]

    def point_at(self, station) -> np.ndarray:
        """Linear interpolation along the polyline; extrapolates past the ends."""
        s = np.atleast_1d(np.asarray(station, dtype=float))
        k = np.clip(np.searchsorted(self.stations, s, side="right") - 1, 0, len(self.seglen) - 1)
        t = (s - self.stations[k]) / self.seglen[k]
        a = self.points[k]
        return a + t[:, None] * (self.points[k + 1] - a)

    def vertex_normals(self) -> np.ndarray:
        """Right-hand plan normals at vertices from central differences."""
        p = self.points[:, :2]
        d = np.empty_like(p)
        d[1:-1] = p[2:] - p[:-2]
        d[0] = p[1] - p[0]
        d[-1] = p[-1] - p[-2]
        d /= np.linalg.norm(d, axis=1)[:, None]
        return np.column_stack([d[:, 1], -d[:, 0]])

    def offset(self, lateral: float, dz: float = 0.0) -> "Polyline":
        """Vertex-wise offset by ``lateral`` (right positive) and ``dz``."""
        n = self.vertex_normals()
        out = self.points.copy()
        out[:, :2] += lateral * n
        out[:, 2] += dz
        return Polyline(out)

    def intersect_line(self, origin, direction):
        """First plan-view crossing of the infinite line ``origin + u*direction``
        with the polyline, as ``(point3d, station)``, or ``None``."""
        o = np.asarray(origin, dtype=float)[:2]
        dvec = np.asarray(direction, dtype=float)[:2]
        a = self.points[:-1, :2]
        e = self.points[1:, :2] - a
        den = e[:, 0] * dvec[1] - e[:, 1] * dvec[0]
        rel = o - a
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rel[:, 0] * dvec[1] - rel[:, 1] * dvec[0]) / den
        ok = (np.abs(den) > 1e-15) & (t >= -1e-12) & (t <= 1 + 1e-12)
        if not ok.any():
            return None
        # closest crossing to the line origin
        cand = np.flatnonzero(ok)
        pts = a[cand] + t[cand, None] * e[cand]
        k = cand[np.argmin(np.hypot(*(pts - o).T))]
        tt = float(np.clip(t[k], 0.0, 1.0))
        p3 = self.points[k] + tt * (self.points[k + 1] - self.points[k])
        return p3, float(self.stations[k] + tt * self.seglen[k])
