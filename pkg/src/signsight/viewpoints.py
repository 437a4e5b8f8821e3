"""Lane partition of the approach field and eye-height viewpoint grid."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCrossSection
from .segmentation import ArcSampling

log = logging.getLogger(__name__)


def lane_count(driving_width: float, d_lane: float) -> tuple[int, float]:
    """Number of lanes fitting the driving width and the resulting lane width."""
    if not (driving_width > 0 and d_lane > 0):
        raise ValueError("driving width and standard lane width must be > 0")
    m = int(math.floor(driving_width / d_lane + 1e-9))
    if m < 1:
        log.warning("driving width %.2f m is below one standard lane (%.2f m); using 1 lane",
                    driving_width, d_lane)
        m = 1
    return m, driving_width / m


def dividing_lines(sampling: ArcSampling, m: int, lane_width: float | None = None) -> list[np.ndarray]:
    """Lane dividing lines ``R_0 .. R_m`` as ``(n, 3)`` sample arrays.

    ``R_i[k] = a[k] + i * w_k * u_k`` with ``u_k`` the unit vector from
    ``a[k]`` to ``b[k]``. By default ``w_k = |b[k] - a[k]| / m`` so that
    ``R_m`` closes on ``b`` exactly even when the road width drifts; pass
    ``lane_width`` to use one constant width instead.
    """
    if m < 1:
        raise ValueError("lane count must be >= 1")
    a, b = sampling.a, sampling.b
    ab = b - a
    span = np.linalg.norm(ab, axis=1)
    if np.any(span <= 1e-12):
        raise DegenerateCrossSection("right and left outline samples coincide")
    u = ab / span[:, None]
    w = span / m if lane_width is None else np.full(len(a), float(lane_width))
    lines = [a + (i * w)[:, None] * u for i in range(m + 1)]
    if lane_width is None:
        lines[-1] = b.copy()
    return lines


@dataclass(frozen=True, eq=False)
class LaneGrid:
    """Viewpoints ``points[i, j]`` for lane ``i`` (0 = rightmost) and column
    ``j``; columns run toward the sign, so ``j = n - 1`` sits on the sign's
    cross-section."""

    lane_count: int
    lane_width: float
    lines: list
    points: np.ndarray
    d_length: np.ndarray
    d_width: np.ndarray

    @property
    def n_columns(self) -> int:
        return self.points.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.points[i]


def viewpoints(lines: list[np.ndarray], h_eye: float, stride: int = 1) -> LaneGrid:
    """Viewpoints on each lane's centerline raised by ``h_eye``, one column
    per ``stride`` cross-sections (the sign's cross-section is always kept).

    Also records, per viewpoint, the arc length back to the sign's
    cross-section along the lane column (``d_length``) and the plan distance
    to the right outline sample of the same cross-section (``d_width``).
    """
    if len(lines) < 2:
        raise ValueError("need at least the two outlines")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    lines = [np.asarray(r, float)[::stride] for r in lines]
    m = len(lines) - 1
    right = lines[0]
    # sampling order is k = 0 at the sign; flip so j grows toward the sign
    centers = [0.5 * (lines[i] + lines[i + 1])[::-1] for i in range(m)]
    pts = np.stack(centers).copy()
    pts[:, :, 2] += h_eye
    step = np.linalg.norm(np.diff(pts, axis=1), axis=2)
    tail = np.cumsum(step[:, ::-1], axis=1)[:, ::-1]
    d_length = np.concatenate([tail, np.zeros((m, 1))], axis=1)
    r = right[::-1]
    d_width = np.linalg.norm(pts[:, :, :2] - r[None, :, :2], axis=2)
    width0 = float(np.linalg.norm(lines[-1][0, :2] - lines[0][0, :2]))
    return LaneGrid(m, width0 / m, lines, pts, d_length, d_width)


def build_lane_grid(sampling: ArcSampling, d_lane: float, h_eye: float, stride: int = 1) -> LaneGrid:
    """Lane count from the driving width at the sign, dividing lines, and
    viewpoints in one go."""
    width = float(np.linalg.norm(sampling.b[0, :2] - sampling.a[0, :2]))
    m, _ = lane_count(width, d_lane)
    return viewpoints(dividing_lines(sampling, m), h_eye, stride)
