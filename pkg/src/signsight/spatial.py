"""Plan-view bucket grid for range queries over large clouds."""

from __future__ import annotations

import math

import numpy as np


class GridIndex:
    """Points bucketed into square plan-view cells.

    Cells are keyed column-major so each grid column maps to one contiguous
    run of the sorted key array; a box query costs one ``searchsorted`` pair
    per column it touches.
    """

    def __init__(self, points, cell: float = 2.0):
        pts = np.asarray(points, dtype=float)
        self.points = pts
        self.cell = float(cell)
        if len(pts) == 0:
            self.origin = np.zeros(2)
            self.nx = self.ny = 1
            self.keys = np.zeros(0, dtype=np.int64)
            self.order = np.zeros(0, dtype=np.int64)
            return
        self.origin = pts[:, :2].min(axis=0)
        ij = np.floor((pts[:, :2] - self.origin) / self.cell).astype(np.int64)
        self.nx = int(ij[:, 0].max()) + 1
        self.ny = int(ij[:, 1].max()) + 1
        keys = ij[:, 0] * self.ny + ij[:, 1]
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]

    def __len__(self) -> int:
        return len(self.points)

    def _cols(self, x0: float, x1: float) -> range:
        i0 = max(0, int(math.floor((x0 - self.origin[0]) / self.cell)))
        i1 = min(self.nx - 1, int(math.floor((x1 - self.origin[0]) / self.cell)))
        return range(i0, i1 + 1)

    def _col_slice(self, i: int, y0: float, y1: float):
        j0 = max(0, int(math.floor((y0 - self.origin[1]) / self.cell)))
        j1 = min(self.ny - 1, int(math.floor((y1 - self.origin[1]) / self.cell)))
        if j1 < j0:
            return None
        lo = np.searchsorted(self.keys, i * self.ny + j0, side="left")
        hi = np.searchsorted(self.keys, i * self.ny + j1, side="right")
        return (lo, hi) if hi > lo else None

    def _gather(self, slices) -> np.ndarray:
        parts = [self.order[lo:hi] for lo, hi in slices]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts)

    def query_box(self, lo, hi) -> np.ndarray:
        """Indices of points whose cell overlaps the plan box (superset)."""
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        slices = []
        for i in self._cols(lo[0], hi[0]):
            s = self._col_slice(i, lo[1], hi[1])
            if s:
                slices.append(s)
        return self._gather(slices)

    def query_capsule(self, p0, p1, radius: float) -> np.ndarray:
        """Superset of points within ``radius`` (plan view) of segment p0-p1."""
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        return self._gather(self._capsule_slices(p0, p1, radius))

    def query_cone(self, apex, end, end_radius: float, piece: float = 1.0) -> np.ndarray:
        """Superset of points within a cone from ``apex`` (radius 0) to
        ``end`` (radius ``end_radius``), sorted and unique.

        The cone is covered by capsules, each as wide as the cone at its far
        end; plan projection never increases distances, so plan capsules
        bound the 3D cone.
        """
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        a = np.asarray(apex, dtype=float)
        b = np.asarray(end, dtype=float)
        L = float(np.linalg.norm(b - a))
        n = max(1, int(math.ceil(L / piece)))
        slices = []
        for k in range(n):
            t0, t1 = k / n, (k + 1) / n
            slices.extend(self._capsule_slices(a + t0 * (b - a), a + t1 * (b - a), t1 * end_radius))
        if not slices:
            return np.zeros(0, dtype=np.int64)
        # merge overlapping runs of the sorted key array before gathering
        slices.sort()
        merged = [list(slices[0])]
        for lo, hi in slices[1:]:
            if lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return np.sort(self._gather(merged))

    def _capsule_slices(self, p0, p1, radius: float) -> list:
        a = np.asarray(p0, dtype=float)[:2]
        b = np.asarray(p1, dtype=float)[:2]
        d = b - a
        r = float(radius)
        slices = []
        for i in self._cols(min(a[0], b[0]) - r, max(a[0], b[0]) + r):
            cx0 = self.origin[0] + i * self.cell - r
            cx1 = cx0 + self.cell + 2 * r
            if abs(d[0]) < 1e-12:
                t0, t1 = 0.0, 1.0
            else:
                ta, tb = (cx0 - a[0]) / d[0], (cx1 - a[0]) / d[0]
                t0, t1 = max(0.0, min(ta, tb)), min(1.0, max(ta, tb))
                if t1 < t0:
                    continue
            ya, yb = a[1] + t0 * d[1], a[1] + t1 * d[1]
            s = self._col_slice(i, min(ya, yb) - r, max(ya, yb) + r)
            if s:
                slices.append(s)
        return slices
