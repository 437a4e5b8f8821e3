"""End-to-end evaluation of every sign in a scene."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import FallbackRequired, GeometryError, SignSightError
from .ideal import build_ideal_scene, corresponding_viewpoint, ideal_visibility
from .recognizability import lane_verdict, viewpoint_recognizability
from .scene import ModelParams, SignInstance
from .segmentation import (
    OutlinePair,
    build_arc_sampling,
    classify_markings,
    fallback_outlines,
    measure_clusters,
    select_outlines,
    sweep_segment,
    plan_heading,
)
from .spatial import GridIndex
from .viewpoints import build_lane_grid
from .visibility import build_view_frame, viewpoint_visibility

log = logging.getLogger(__name__)

SWEEP_CELL = 2.0
CONE_CELL = 0.5


@dataclass
class ViewpointResult:
    lane: int
    column: int
    position: np.ndarray
    d_length: float
    d_width: float
    e_geo: float
    e_occ: float
    e_sight: float
    e_visibility: float
    e_visibility_ideal: float
    occlusion_ratio: float
    sight_angle: float
    cognitive_ratio: float | None
    recognizable: int
    degenerate: bool = False


@dataclass
class LaneResult:
    lane: int
    viewpoints: list
    max_cog_length: float
    vrd: float
    timely: int


@dataclass
class SignResult:
    sign_id: str
    sign_type: str = ""
    side: str = "right"
    sight_distance: float = 0.0
    field_length: float = 0.0
    lane_count: int = 0
    lanes: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def choose_outlines(scene, sign: SignInstance, params: ModelParams) -> OutlinePair:
    """Marking-based outlines when usable, trajectory offsets otherwise."""
    traj = scene.trajectory
    if scene.markings:
        clusters = classify_markings(measure_clusters(scene.markings, traj), params.solid_length)
        try:
            return select_outlines(clusters, traj, sign, params)
        except FallbackRequired as exc:
            log.info("sign %s: %s; using trajectory offsets", sign.id, exc)
    return fallback_outlines(traj, params.device_height, params.fallback_half_width, sign)


def _sampling_interval(scene, params: ModelParams) -> float:
    if params.interval_points is not None:
        return params.interval_points * scene.trajectory.median_spacing()
    return params.interval


def _fallback_shift(sign, outlines: OutlinePair, traj, params: ModelParams) -> float:
    """Without markings the sign is taken as ideally placed: the reference
    right outline passes ``w_shoulder`` from the sign toward the road. Returns
    how far that reference sits from the fallback right outline, measured
    toward the left outline."""
    h = plan_heading(sign.center, traj)
    ref = sign.center[:2] + params.w_shoulder * h
    u = outlines.left_anchor[:2] - outlines.right_anchor[:2]
    u = u / np.linalg.norm(u)
    return float(np.dot(ref - outlines.right_anchor[:2], u))


def evaluate_sign(scene, sign: SignInstance, params: ModelParams | None = None,
                  env_index: GridIndex | None = None) -> SignResult:
    """Run segmentation, viewpoints, actual and ideal visibility and the lane
    verdicts for one sign."""
    params = params or scene.params
    entry = scene.library.entry(sign.sign_type)
    sd = sign.sight_distance
    res = SignResult(sign.id, sign.sign_type, sign.side, sd)

    outlines = choose_outlines(scene, sign, params)
    res.flags["fallback_outlines_used"] = bool(outlines.fallback)
    sampling = build_arc_sampling(outlines, sd, _sampling_interval(scene, params), scene.trajectory)
    res.flags["short_field"] = bool(sampling.short_field)
    res.field_length = sampling.length

    seg = sweep_segment(scene.environment, sampling, params, outlines.driving_width,
                        exclude=sign.panel, index=env_index)
    grid = build_lane_grid(sampling, params.d_lane, params.h_eye)
    res.lane_count = grid.lane_count
    d_width = grid.d_width
    if outlines.fallback:
        d_width = d_width - _fallback_shift(sign, outlines, scene.trajectory, params)

    d_sign = None
    if sign.side == "overhead":
        ref = outlines.right_anchor
        if outlines.fallback:
            u = outlines.left_anchor[:2] - outlines.right_anchor[:2]
            ref = ref[:2] + _fallback_shift(sign, outlines, scene.trajectory, params) * u / np.linalg.norm(u)
        d_sign = float(np.linalg.norm(sign.center[:2] - np.asarray(ref)[:2]))
    ideal = build_ideal_scene(entry, params, sign.side, d_sign)

    env_pts = seg.environment
    cone_index = GridIndex(env_pts.points, CONE_CELL) if len(env_pts) else None
    for i in range(grid.lane_count):
        vps = []
        for j in range(grid.n_columns):
            vp = grid.points[i, j]
            degenerate = False
            try:
                frame = build_view_frame(sign, env_pts, vp, params, cone_index)
                rec = viewpoint_visibility(frame, grid, i, j, params, entry, sign.center)
                e_geo, e_occ, e_sight, e_vis = rec.e_geo, rec.e_occ, rec.e_sight, rec.e_visibility
                ratio_occ, v_a = rec.occlusion_ratio, rec.sight_angle
            except GeometryError as exc:
                log.debug("sign %s viewpoint (%d, %d): %s", sign.id, i, j, exc)
                e_geo = e_occ = e_sight = e_vis = ratio_occ = v_a = 0.0
                degenerate = True
            vr = ViewpointResult(
                i, j, vp.copy(), float(grid.d_length[i, j]), float(d_width[i, j]),
                e_geo, e_occ, e_sight, e_vis, 0.0, ratio_occ, v_a, None, 0, degenerate,
            )
            try:
                ideal_vp = corresponding_viewpoint(vr, params)
                vr.e_visibility_ideal = ideal_visibility(ideal, ideal_vp, entry, params).e_visibility
            except GeometryError:
                vr.e_visibility_ideal = 0.0
            rr = viewpoint_recognizability(e_vis, vr.e_visibility_ideal, params, i, j)
            vr.cognitive_ratio, vr.recognizable = rr.cognitive_ratio, rr.recognizable
            vr.degenerate = degenerate or rr.degenerate
            vps.append(vr)
        bits = [v.recognizable for v in vps]
        pos = [v.d_length for v in vps]
        verdict = lane_verdict(bits, pos, params, i, sd)
        res.flags["vrd_exceeds_sight_distance"] = bool(verdict.vrd_exceeds_sight_distance)
        res.lanes.append(LaneResult(i, vps, verdict.max_cog_length, verdict.vrd, verdict.timely))
    return res


def evaluate(scene, params: ModelParams | None = None, jobs: int = 1) -> list[SignResult]:
    """Evaluate every sign; a failing sign yields a result with ``error`` set
    and does not stop the others. Results are ordered by sign id."""
    params = params or scene.params
    index = GridIndex(scene.environment.points, SWEEP_CELL) if len(scene.environment) else None

    def one(sign):
        try:
            return evaluate_sign(scene, sign, params, index)
        except (SignSightError, ValueError) as exc:
            log.error("sign %s failed: %s", sign.id, exc)
            return SignResult(sign.id, sign.sign_type, sign.side, sign.sight_distance or 0.0,
                              error=f"{type(exc).__name__}: {exc}")

    signs = sorted(scene.signs, key=lambda s: s.id)
    if jobs > 1 and len(signs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, signs))
    return [one(s) for s in signs]
