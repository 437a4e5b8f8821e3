"""Point-cloud files, parameter files, sign libraries and scene manifests."""

from __future__ import annotations

import math
import os
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import DegeneratePanel, SignBoundaryError, ValidationError
from .geometry import rotation_aligning
from .scene import (
    MarkingCluster,
    ModelParams,
    PointCloud,
    SignInstance,
    SignLibrary,
    SignLibraryEntry,
    Trajectory,
    parse_speed,
    plane_fit_center,
    standard_area,
)

LIBRARY_ENV = "SIGNSIGHT_LIBRARY"


# --------------------------------------------------------------------------
# point clouds


def _scan_xyz(path: Path, text: str) -> np.ndarray:
    """Slow line-by-line parse, used to locate the first bad record."""
    rows = []
    ncol = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) not in (3, 4):
            raise ValidationError(f"expected 3 or 4 columns, found {len(parts)}", path, lineno)
        if ncol is None:
            ncol = len(parts)
        elif len(parts) != ncol:
            raise ValidationError(f"expected {ncol} columns, found {len(parts)}", path, lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValidationError(f"cannot parse numbers in {line!r}", path, lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("non-finite coordinate", path, lineno)
        rows.append(vals)
    if not rows:
        raise ValidationError("point cloud file is empty", path)
    return np.array(rows, dtype=float)


def _read_xyz(path: Path) -> PointCloud:
    try:
        with warnings.catch_warnings():
            # empty files are reported below with a proper message
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(path, comments="#", ndmin=2, dtype=float)
        ok = data.size > 0 and data.shape[1] in (3, 4) and np.all(np.isfinite(data))
    except ValueError:
        ok = False
    if not ok:
        data = _scan_xyz(path, path.read_text())
    if data.shape[1] == 4:
        return PointCloud(data[:, :3], data[:, 3])
    return PointCloud(data)


def _read_ply(path: Path) -> PointCloud:
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValidationError("missing 'ply' magic", path, 1)
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    header_end = None
    for lineno, raw in enumerate(lines[1:], 2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise ValidationError("only ASCII PLY is supported", path, lineno)
        elif tok[0] == "element":
            in_vertex = len(tok) == 3 and tok[1] == "vertex"
            if in_vertex:
                try:
                    n_vertex = int(tok[2])
                except ValueError:
                    raise ValidationError("bad vertex count", path, lineno) from None
        elif tok[0] == "property":
            if in_vertex:
                if tok[1] == "list":
                    raise ValidationError("list properties on vertices are not supported", path, lineno)
                props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = lineno
            break
        else:
            raise ValidationError(f"unexpected header line {raw!r}", path, lineno)
    if header_end is None:
        raise ValidationError("PLY header has no end_header", path)
    if n_vertex is None:
        raise ValidationError("PLY has no vertex element", path)
    for axis in ("x", "y", "z"):
        if axis not in props:
            raise ValidationError(f"PLY vertex lacks property {axis!r}", path)
    if n_vertex == 0:
        raise ValidationError("point cloud file is empty", path)
    body = lines[header_end:header_end + n_vertex]
    if len(body) < n_vertex:
        raise ValidationError(f"expected {n_vertex} vertices, found {len(body)}", path, header_end + len(body) + 1)
    data = np.empty((n_vertex, len(props)))
    for k, raw in enumerate(body):
        parts = raw.split()
        try:
            if len(parts) < len(props):
                raise ValueError
            data[k] = [float(p) for p in parts[:len(props)]]
        except ValueError:
            raise ValidationError(f"cannot parse vertex {raw!r}", path, header_end + k + 1) from None
    if not np.all(np.isfinite(data)):
        raise ValidationError("non-finite coordinate", path)
    cols = [props.index(a) for a in ("x", "y", "z")]
    inten = None
    for name in ("intensity", "scalar_intensity", "i"):
        if name in props:
            inten = data[:, props.index(name)]
            break
    return PointCloud(data[:, cols], inten)


def read_point_cloud(path) -> PointCloud:
    """Read ASCII XYZ[I] (``.xyz``, ``.txt``, ``.pts``) or ASCII PLY."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path)
    if path.suffix.lower() == ".ply":
        return _read_ply(path)
    return _read_xyz(path)


def write_point_cloud(path, cloud) -> None:
    """Write XYZ[I] or ASCII PLY (by suffix) at full double precision."""
    path = Path(path)
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    inten = cloud.intensity if isinstance(cloud, PointCloud) else None
    data = pts if inten is None else np.column_stack([pts, inten])
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".ply":
        names = ["x", "y", "z"] + ([] if inten is None else ["intensity"])
        header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}"]
        header += [f"property double {n}" for n in names] + ["end_header"]
        np.savetxt(path, data, fmt="%.17g", header="\n".join(header), comments="")
    else:
        np.savetxt(path, data, fmt="%.17g")


# --------------------------------------------------------------------------
# parameter files


_KV_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def read_params_file(path) -> dict:
    """``key = value`` lines with ``#`` comments; returns ``{key: (value,
    line)}`` for :meth:`ModelParams.with_overrides`."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path)
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _KV_RE.match(line)
        if not m or not m.group(2):
            raise ValidationError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
        value = m.group(2).strip().strip('"').strip("'")
        out[m.group(1)] = (value, lineno)
    return out


def load_params(path, base: ModelParams | None = None) -> ModelParams:
    return (base or ModelParams()).with_overrides(read_params_file(path), source=str(path))


# --------------------------------------------------------------------------
# TOML helpers


def read_toml(path) -> tuple[dict, list[str]]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ValidationError(f"malformed file: {exc}", path, int(m.group(1)) if m else None) from None
    return data, text.splitlines()


class _Locator:
    """Best-effort line numbers for keys inside a TOML document."""

    def __init__(self, lines: list[str]):
        self.lines = lines
        self.tables: list[tuple[str, int]] = []
        for k, raw in enumerate(lines, 1):
            s = raw.strip()
            if s.startswith("["):
                self.tables.append((s.strip("[]").strip(), k))

    def table(self, name: str, index: int = 0) -> int | None:
        hits = [ln for t, ln in self.tables if t == name]
        return hits[index] if index < len(hits) else None

    def key(self, table: str, key: str, index: int = 0) -> int | None:
        start = self.table(table, index) if table else 0
        if start is None:
            return None
        stop = min((ln for _, ln in self.tables if ln > start), default=len(self.lines) + 1)
        pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
        for ln in range(start + 1 if table else 1, stop):
            if pat.match(self.lines[ln - 1]):
                return ln
        return start or None


def _resolve(base: Path, rel) -> Path:
    p = Path(str(rel))
    return p if p.is_absolute() else base / p


# --------------------------------------------------------------------------
# sign library


def canonicalize_panel(points) -> np.ndarray:
    """Move a panel cloud to the canonical pose: centroid at the origin and
    fitted normal along +y."""
    pts = np.asarray(points, float)
    center, normal, _ = plane_fit_center(pts)
    if normal[1] < 0:
        normal = -normal
    return rotation_aligning(normal, [0.0, 1.0, 0.0]).apply(pts - center)


def load_library(directory, params: ModelParams | None = None) -> SignLibrary:
    """Load ``library.toml`` and its panel clouds from ``directory``."""
    params = params or ModelParams()
    directory = Path(directory)
    index = directory / "library.toml"
    data, lines = read_toml(index)
    loc = _Locator(lines)
    types = data.get("type", [])
    if not isinstance(types, list):
        raise ValidationError("'type' must be an array of tables", index)
    entries = []
    for k, row in enumerate(types):
        line = loc.table("type", k)
        for req in ("name", "panel"):
            if req not in row:
                raise ValidationError(f"library type is missing {req!r}", index, line)
        pts = read_point_cloud(_resolve(directory, row["panel"]))
        try:
            canon = PointCloud(canonicalize_panel(pts.points))
            area = standard_area(canon, params)
        except (DegeneratePanel, SignBoundaryError) as exc:
            raise ValidationError(f"library type {row['name']}: {exc}", index, line) from None
        sd = {}
        for speed, dist in dict(row.get("sight_distance", {})).items():
            try:
                sd[parse_speed(speed, require_unit=True)] = float(dist)
            except ValueError as exc:
                raise ValidationError(str(exc), index, loc.key("", speed) or line) from None
        mh = row.get("mount_height")
        entries.append(SignLibraryEntry(str(row["name"]), canon, area,
                                        None if mh is None else float(mh), sd))
    return SignLibrary(entries, str(directory))


def resolve_library(path=None, params: ModelParams | None = None) -> SignLibrary:
    """Library from ``path``, else ``$SIGNSIGHT_LIBRARY``, else the builtin set."""
    path = path or os.environ.get(LIBRARY_ENV)
    if path:
        return load_library(path, params)
    return SignLibrary.builtin(params)


# --------------------------------------------------------------------------
# scene manifest


@dataclass(eq=False)
class Scene:
    manifest: Path
    trajectory: Trajectory
    environment: PointCloud
    markings: list | None
    signs: list
    library: SignLibrary
    params: ModelParams
    sign_lines: dict = field(default_factory=dict)

    @property
    def fallback(self) -> bool:
        return self.markings is None


_ROAD_KEYS = {"design_speed": "v_design", "v85": "v85", "t_vrt": "t_vrt",
              "lane_width": "d_lane", "sight_distance": None}


def load_scene(manifest, params_file=None, library=None) -> Scene:
    """Parse and validate a scene manifest.

    Relative paths resolve against the manifest's directory. Errors carry the
    offending file and, where possible, line.
    """
    manifest = Path(manifest)
    data, lines = read_toml(manifest)
    loc = _Locator(lines)
    base = manifest.parent
    for key in data:
        if key not in ("scene", "road", "params", "sign"):
            raise ValidationError(f"unknown section {key!r}", manifest, loc.table(key))

    scene = data.get("scene")
    if not isinstance(scene, dict):
        raise ValidationError("missing [scene] section", manifest)
    if "trajectory" not in scene:
        raise ValidationError("[scene] needs 'trajectory'", manifest, loc.table("scene"))

    # parameters: defaults < [params] < [road] < params file
    params = ModelParams()
    overrides = {}
    for key, val in dict(data.get("params", {})).items():
        overrides[key] = (val, loc.key("params", key))
    road = dict(data.get("road", {}))
    road_sd = None
    for key, val in road.items():
        ln = loc.key("road", key)
        if key not in _ROAD_KEYS:
            raise ValidationError(f"unknown road key {key!r}", manifest, ln)
        if key in ("design_speed", "v85"):
            try:
                val = parse_speed(val, require_unit=True)
            except ValueError as exc:
                raise ValidationError(str(exc), manifest, ln) from None
        if key == "sight_distance":
            road_sd = (float(val), ln)
            continue
        overrides[_ROAD_KEYS[key]] = (val, ln)
    params = params.with_overrides(overrides, source=str(manifest))
    if params_file is not None:
        params = load_params(params_file, params)
    for need in ("v85", "v_design", "t_vrt"):
        if getattr(params, need) is None:
            raise ValidationError(f"road parameter {need} is required", manifest, loc.table("road"))

    lib_path = library
    if lib_path is None and scene.get("library"):
        lib_path = _resolve(base, scene["library"])
    lib = resolve_library(lib_path, params)

    traj_cloud = read_point_cloud(_resolve(base, scene["trajectory"]))
    try:
        traj = Trajectory(traj_cloud.points)
    except ValidationError as exc:
        raise ValidationError(exc.message, _resolve(base, scene["trajectory"])) from None

    env_files = scene.get("environment", [])
    if isinstance(env_files, str):
        env_files = [env_files]
    environment = PointCloud.concat(read_point_cloud(_resolve(base, f)) for f in env_files)

    marks = scene.get("markings", "auto-fallback")
    if marks == "auto-fallback":
        markings = None
    else:
        if isinstance(marks, str):
            marks = [marks]
        markings = []
        for f in marks:
            pc = read_point_cloud(_resolve(base, f))
            markings.append(MarkingCluster(pc, name=str(f)))

    signs, sign_lines = [], {}
    rows = data.get("sign", [])
    if not isinstance(rows, list):
        raise ValidationError("'sign' must be an array of tables", manifest, loc.table("sign"))
    seen = set()
    for k, row in enumerate(rows):
        line = loc.table("sign", k)
        for req in ("id", "type", "panel"):
            if req not in row:
                raise ValidationError(f"sign is missing {req!r}", manifest, line)
        sid = str(row["id"])
        if sid in seen:
            raise ValidationError(f"duplicate sign id {sid!r}", manifest, line)
        seen.add(sid)
        entry = lib.entry(str(row["type"])) if str(row["type"]) in lib else None
        if entry is None:
            raise ValidationError(f"sign {sid}: type {row['type']!r} not in sign library ({lib.source})",
                                  manifest, loc.key("sign", "type", k) or line)
        sd = row.get("sight_distance")
        if sd is None and road_sd is not None:
            sd = road_sd[0]
        if sd is None:
            sd = entry.sight_distance_for(params.v_design)
        if sd is None:
            raise ValidationError(f"sign {sid}: no sight distance for the design speed", manifest, line)
        panel = read_point_cloud(_resolve(base, row["panel"]))
        try:
            sign = SignInstance(sid, str(row["type"]), panel, str(row.get("side", "right")), float(sd))
        except ValidationError as exc:
            raise ValidationError(exc.message, manifest, line) from None
        signs.append(sign)
        sign_lines[sid] = line
    return Scene(manifest, traj, environment, markings, signs, lib, params, sign_lines)
