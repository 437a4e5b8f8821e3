"""Road outlines, arc-length sampling and band segmentation in front of a sign."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateHeading, DegenerateStep, FallbackRequired, ValidationError
from .polyline import Polyline
from .scene import MarkingCluster, ModelParams, PointCloud, Trajectory
from .spatial import GridIndex

log = logging.getLogger(__name__)

Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class OutlinePair:
    right: Polyline
    left: Polyline
    right_anchor: np.ndarray
    left_anchor: np.ndarray
    fallback: bool = False

    @property
    def driving_width(self) -> float:
        return float(np.linalg.norm(self.left_anchor[:2] - self.right_anchor[:2]))


@dataclass(frozen=True, eq=False)
class ArcSampling:
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray
    arc: np.ndarray
    short_field: bool = False

    def __len__(self) -> int:
        return len(self.a)

    @property
    def length(self) -> float:
        return float(self.arc[-1])


@dataclass(frozen=True, eq=False)
class SegmentedScene:
    environment: PointCloud
    markings: PointCloud
    env_index: np.ndarray
    marking_index: np.ndarray


# --------------------------------------------------------------------------
# heading and markings


def sign_heading(sign, traj: Trajectory) -> np.ndarray:
    """Unit vector from the panel center to the nearest trajectory point."""
    if traj is None or len(traj) == 0:
        raise ValidationError("trajectory is empty")
    c = sign.center if hasattr(sign, "center") else np.asarray(sign, float)
    p = traj.points[traj.nearest_index(c)]
    h = p - c
    n = np.linalg.norm(h)
    if n < 1e-12:
        raise DegenerateHeading("panel center coincides with the trajectory point")
    return h / n


def plan_heading(sign_center, traj: Trajectory) -> np.ndarray:
    """Plan direction of the heading line; falls back to the trajectory normal
    when the heading is (nearly) vertical."""
    h = sign_heading(sign_center, traj)
    hp = h[:2]
    n = np.linalg.norm(hp)
    if n > 1e-6:
        return hp / n
    k = traj.nearest_index(sign_center)
    s = traj.stations[k]
    t = traj.tangent(s)[0]
    return np.array([-t[1], t[0]])


def measure_clusters(clusters, traj: Trajectory) -> list[MarkingCluster]:
    """Fill in each cluster's extent along the road (trajectory stations)."""
    out = []
    for c in clusters:
        s, _, _ = traj.project(c.cloud.points)
        length = float(s.max() - s.min()) if len(s) else 0.0
        out.append(MarkingCluster(c.cloud, c.kind, length, c.name))
    return out


def classify_markings(clusters, threshold: float = 30.0) -> list[MarkingCluster]:
    """Solid iff the along-road length reaches ``threshold``, else dashed."""
    out = []
    for c in clusters:
        if c.length is None:
            raise ValueError("cluster length not measured; call measure_clusters first")
        kind = "solid" if c.length >= threshold else "dashed"
        out.append(MarkingCluster(c.cloud, kind, c.length, c.name))
    return out


def outline_polyline(cluster: MarkingCluster, traj: Trajectory, bin_size: float = 0.5) -> Polyline:
    """Order a solid cluster into a polyline by binning along the trajectory.

    Gaps wider than two bins are filled parallel to the trajectory at the
    cluster's median lateral offset.
    """
    pts = cluster.cloud.points
    s, lat, _ = traj.project(pts)
    b = np.floor(s / bin_size).astype(np.int64)
    ub, inv = np.unique(b, return_inverse=True)
    cnt = np.bincount(inv)
    verts = np.column_stack([np.bincount(inv, weights=pts[:, d]) / cnt for d in range(3)])
    vs = np.bincount(inv, weights=s) / cnt
    med = float(np.median(lat))
    filled_v, filled_s = [verts[0]], [vs[0]]
    for k in range(1, len(ub)):
        if ub[k] - ub[k - 1] > 2:
            gs = np.arange(vs[k - 1] + bin_size, vs[k] - 0.5 * bin_size, bin_size)
            if len(gs):
                base = traj.point_at(gs)
                t = traj.tangent(gs)
                normal = np.column_stack([t[:, 1], -t[:, 0]])
                w = (gs - vs[k - 1]) / (vs[k] - vs[k - 1])
                z = verts[k - 1, 2] + w * (verts[k, 2] - verts[k - 1, 2])
                fill = np.column_stack([base[:, :2] + med * normal, z])
                filled_v.extend(fill)
                filled_s.extend(gs)
        filled_v.append(verts[k])
        filled_s.append(vs[k])
    v = np.asarray(filled_v)
    if len(v) < 2:
        raise ValueError("cluster too short to form an outline")
    step = np.hypot(*np.diff(v[:, :2], axis=0).T)
    keep = np.concatenate([[True], step > 1e-9])
    return Polyline(v[keep])


def select_outlines(solids, traj: Trajectory, sign, params: ModelParams | None = None) -> OutlinePair:
    """Right outline = farthest solid line right of the trajectory, left outline
    = nearest solid line left of it, both measured at the sign's slice."""
    params = params or ModelParams()
    solids = [c for c in solids if c.kind == "solid"]
    if not solids:
        raise FallbackRequired("no solid road markings")
    c = sign.center if hasattr(sign, "center") else np.asarray(sign, float)
    k = traj.nearest_index(c)
    t0 = traj.points[max(k - 1, 0), :2]
    t1 = traj.points[min(k + 1, len(traj) - 1), :2]
    dl = (t1 - t0) / np.linalg.norm(t1 - t0)
    hdir = plan_heading(c, traj)
    half = 0.5 * params.slice_thickness

    found = []
    for cl in solids:
        pts = cl.cloud.points
        rel = pts[:, :2] - c[:2]
        off = np.abs(rel[:, 0] * hdir[1] - rel[:, 1] * hdir[0])
        sl = pts[off <= half]
        poly = outline_polyline(cl, traj)
        if len(sl):
            center = sl.mean(axis=0)
        else:
            hit = poly.intersect_line(c, hdir)
            if hit is None:
                continue
            center = hit[0]
        r = center[:2] - t0
        side = dl[1] * r[0] - dl[0] * r[1]  # right of travel is positive
        found.append((side, center, poly))

    right = [f for f in found if f[0] > 0]
    left = [f for f in found if f[0] < 0]
    if not right or not left:
        raise FallbackRequired("solid road markings missing on one side of the trajectory")
    # ties broken by coordinates so the result ignores input order
    r_sel = max(right, key=lambda f: (f[0], tuple(f[1])))
    l_sel = min(left, key=lambda f: (-f[0], tuple(f[1])))
    return OutlinePair(r_sel[2], l_sel[2], r_sel[1], l_sel[1], fallback=False)


def fallback_outlines(traj: Trajectory, device_height: float, half_width: float, sign=None) -> OutlinePair:
    """Outlines from the trajectory shifted ``half_width`` sideways and
    lowered by the scanner height. Anchors are placed on the sign's heading
    line when ``sign`` is given, else at the trajectory start."""
    right = traj.offset(half_width, -device_height)
    left = traj.offset(-half_width, -device_height)
    if sign is None:
        return OutlinePair(right, left, right.points[0], left.points[0], fallback=True)
    c = sign.center if hasattr(sign, "center") else np.asarray(sign, float)
    hdir = plan_heading(c, traj)
    anchors = []
    for pl in (right, left):
        hit = pl.intersect_line(c, hdir)
        if hit is None:
            s, _, _ = pl.project(c[None, :])
            anchors.append(pl.point_at(s)[0])
        else:
            anchors.append(hit[0])
    return OutlinePair(right, left, anchors[0], anchors[1], fallback=True)


# --------------------------------------------------------------------------
# arc-length sampling


class _StationCurve:
    """Outline position as a function of trajectory station."""

    def __init__(self, outline: Polyline, traj: Polyline):
        s, _, _ = traj.project(outline.points)
        order = np.argsort(s, kind="stable")
        s = s[order]
        pts = outline.points[order]
        keep = np.concatenate([[True], np.diff(s) > 1e-9])
        self.s = s[keep]
        self.pts = pts[keep]
        self.lo = float(self.s[0])

    def __call__(self, st: float) -> np.ndarray:
        return np.array([np.interp(st, self.s, self.pts[:, d]) for d in range(3)])


def build_arc_sampling(outlines: OutlinePair, sight_distance: float, interval: float,
                       traj: Polyline | None = None) -> ArcSampling:
    """Step both outlines back from their anchors (against the driving
    direction) every ``interval`` of station until the midline reaches
    ``sight_distance``; the last sample is pulled back so the midline length
    equals it exactly.

    Stations are measured along ``traj`` when given (so both outlines stay
    abreast on curves), else along the right outline.
    """
    if not sight_distance > interval > 0:
        raise ValueError("need sight_distance > interval > 0")
    ref = traj if traj is not None else outlines.right
    ra = _StationCurve(outlines.right, ref)
    lb = _StationCurve(outlines.left, ref)
    sa = float(ref.project(outlines.right_anchor[None, :])[0][0])
    sb = float(ref.project(outlines.left_anchor[None, :])[0][0])

    a = [np.asarray(outlines.right_anchor, float)]
    b = [np.asarray(outlines.left_anchor, float)]
    m = [0.5 * (a[0] + b[0])]
    arc = [0.0]
    short = False
    while True:
        avail = min(sa - ra.lo, sb - lb.lo)
        step = min(interval, avail)
        if step <= 1e-9:
            short = True
            break
        sa, sb = sa - step, sb - step
        ak, bk = ra(sa), lb(sb)
        mk = 0.5 * (ak + bk)
        seg = float(np.linalg.norm(mk - m[-1]))
        if seg <= 0:
            continue
        if arc[-1] + seg >= sight_distance - 1e-12:
            # p_tmp: pull the last sample back to the exact sight distance
            ratio = (sight_distance - arc[-1]) / seg
            a.append(a[-1] + ratio * (ak - a[-1]))
            b.append(b[-1] + ratio * (bk - b[-1]))
            m.append(m[-1] + ratio * (mk - m[-1]))
            arc.append(float(sight_distance))
            break
        a.append(ak)
        b.append(bk)
        m.append(mk)
        arc.append(arc[-1] + seg)
        if step < interval:
            short = True
            break
    if short:
        log.warning("outlines end %.1f m before the sight distance %.1f m", sight_distance - arc[-1], sight_distance)
    return ArcSampling(np.array(a), np.array(b), np.array(m), np.array(arc), short)


# --------------------------------------------------------------------------
# band segmentation


def _horizontal_normal(a_k, a_k1) -> np.ndarray:
    d = np.asarray(a_k1, float) - np.asarray(a_k, float)
    hz = np.cross(d, Z)
    n = np.linalg.norm(hz)
    if n < 1e-12:
        raise DegenerateStep("consecutive outline samples coincide in plan view")
    return hz / n


def segmentation_rectangles(a_k, a_k1, params: ModelParams, width: float):
    """Environment and marking rectangles standing on ``a_k``.

    Returns two ``(4, 3)`` arrays ``(r1..r4)`` and ``(m1..m4)``.
    """
    p = np.asarray(a_k, float)
    h = _horizontal_normal(a_k, a_k1)
    r1 = p + [0, 0, params.band_low]
    r2 = p + [0, 0, params.band_high]
    r3 = r2 + params.band_width * h
    r4 = r1 + params.band_width * h
    w = width + params.marking_margin
    m1 = p + [0, 0, params.marking_half_height]
    m2 = p - [0, 0, params.marking_half_height]
    m3 = m2 - w * h
    m4 = m1 - w * h
    return np.array([r1, r2, r3, r4]), np.array([m1, m2, m3, m4])


def band_masks(points: np.ndarray, base, end, params: ModelParams, width: float):
    """Membership of ``points`` in the environment / marking volumes swept
    from the rectangles at ``base`` to ``end`` (``base`` upstream)."""
    base = np.asarray(base, float)
    end = np.asarray(end, float)
    h = _horizontal_normal(base, end)
    u = end[:2] - base[:2]
    L = float(np.hypot(*u))
    u = u / L
    rel = points - base
    s = rel[:, 0] * u[0] + rel[:, 1] * u[1]
    w = rel[:, 0] * h[0] + rel[:, 1] * h[1]
    dz = rel[:, 2] - (s / L) * (end[2] - base[2])
    along = (s >= 0) & (s <= L)
    env = along & (w >= 0) & (w <= params.band_width) & (dz >= params.band_low) & (dz <= params.band_high)
    wm = width + params.marking_margin
    mark = along & (w <= 0) & (w >= -wm) & (np.abs(dz) <= params.marking_half_height)
    return env, mark


def sweep_segment(
    cloud: PointCloud,
    sampling: ArcSampling,
    params: ModelParams,
    width: float,
    exclude: PointCloud | None = None,
    index: GridIndex | None = None,
) -> SegmentedScene:
    """Points inside the volumes swept between consecutive rectangles along
    ``a[]``. Points within ``params.panel_exclusion`` of ``exclude`` (the sign
    panel) are left out of the environment."""
    pts = cloud.points
    n = len(pts)
    env = np.zeros(n, dtype=bool)
    mark = np.zeros(n, dtype=bool)
    if n and len(sampling) >= 2:
        index = index if index is not None else GridIndex(pts, cell=2.0)
        a = sampling.a
        reach = max(params.band_width, width + params.marking_margin)
        for k in range(len(a) - 1):
            base, end = a[k + 1], a[k]  # driving order
            if np.hypot(*(end[:2] - base[:2])) < 1e-12:
                continue
            lo = np.minimum(base[:2], end[:2]) - reach
            hi = np.maximum(base[:2], end[:2]) + reach
            cand = index.query_box(lo, hi)
            if len(cand) == 0:
                continue
            e, mk = band_masks(pts[cand], base, end, params, width)
            env[cand[e]] = True
            mark[cand[mk]] = True
    if exclude is not None and len(exclude) and env.any():
        idx = np.flatnonzero(env)
        d, _ = cKDTree(exclude.points).query(pts[idx], distance_upper_bound=params.panel_exclusion)
        env[idx[d <= params.panel_exclusion]] = False
    ei = np.flatnonzero(env)
    mi = np.flatnonzero(mark)
    return SegmentedScene(cloud.subset(ei), cloud.subset(mi), ei, mi)
