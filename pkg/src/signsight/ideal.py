"""Ideal straight, unobstructed road for a sign type and its visibility."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import ModelParams, PointCloud, SignInstance, SignLibraryEntry
from .visibility import build_view_frame, geometric_factor, gfov, sight_line_factor

Z = np.array([0.0, 0.0, 1.0])
# drivers travel toward the sign's cross-section at y = 0 from +y
IDEAL_SIGHT = np.array([0.0, -1.0, 0.0])


def ideal_normal(depression: float, pass_angle: float) -> np.ndarray:
    """Standard panel normal from the depression and pass-direction angles."""
    cp = math.cos(depression)
    return np.array([cp * math.sin(pass_angle), cp * math.cos(pass_angle), math.sin(depression)])


def pose_matrix(normal) -> np.ndarray:
    """Rotation taking the canonical panel frame (face x/z, normal +y) to a
    panel with ``normal`` whose face x-axis stays horizontal."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    e1 = np.cross(n, Z)
    if np.linalg.norm(e1) < 1e-12:
        e1 = np.array([1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e3 = np.cross(e1, n)
    return np.column_stack([e1, n, e3])


@dataclass(frozen=True, eq=False)
class IdealScene:
    sign: SignInstance
    normal: np.ndarray
    center: np.ndarray
    gfov: float
    v_design: float
    standard_area: float


def build_ideal_scene(entry: SignLibraryEntry, params: ModelParams, side: str = "right",
                      d_sign: float | None = None) -> IdealScene:
    """Pose the library panel per the mounting standard beside (or over) a
    straight road whose right outline is the y-axis."""
    if params.v_design is None:
        raise ValueError("design speed is required for the ideal scene")
    if side == "right":
        h = entry.mount_height if entry.mount_height is not None else params.mount_height
        center = np.array([params.w_shoulder, 0.0, h])
    elif side == "overhead":
        if d_sign is None:
            raise ValueError("overhead signs need d_sign")
        h = entry.mount_height if entry.mount_height is not None else params.mount_height_overhead
        center = np.array([-float(d_sign), 0.0, h])
    else:
        raise ValueError(f"unknown side {side!r}")
    n = ideal_normal(params.depression, params.pass_angle)
    canon = entry.panel.points - entry.panel.points.mean(axis=0)
    posed = canon @ pose_matrix(n).T + center
    sign = SignInstance(f"ideal:{entry.sign_type}", entry.sign_type, PointCloud(posed), side)
    return IdealScene(sign, n, sign.center, gfov(params.v_design), params.v_design, entry.standard_area)


def corresponding_viewpoint(record, params: ModelParams) -> np.ndarray:
    """Ideal-frame viewpoint with the same approach length and lateral offset."""
    return np.array([-record.d_width, record.d_length, params.h_eye])


@dataclass(frozen=True)
class IdealRecord:
    e_geo: float
    e_sight: float
    e_visibility: float
    a_view: float
    sight_angle: float


def ideal_visibility(scene: IdealScene, vp, entry: SignLibraryEntry, params: ModelParams) -> IdealRecord:
    """Ideal visibility: geometric factor times sight-line factor (no
    occluders exist in the ideal scene)."""
    vp = np.asarray(vp, float)
    frame = build_view_frame(scene.sign, np.zeros((0, 3)), vp, params)
    e_geo, a_view = geometric_factor(frame, entry, params)
    g = scene.center - vp
    v_a = math.acos(max(-1.0, min(1.0, float(np.dot(IDEAL_SIGHT, g) / np.linalg.norm(g)))))
    e_sight = sight_line_factor(v_a, scene.gfov, params.eta)
    return IdealRecord(e_geo, e_sight, e_geo * e_sight, a_view, v_a)
