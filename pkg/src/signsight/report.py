"""Text, JSON and CSV reports of evaluated signs.

Numbers are written with ``repr`` so the text and JSON reports carry the same
values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

FLAG_NAMES = ("short_field", "vrd_exceeds_sight_distance", "fallback_outlines_used")
VIEWPOINT_COLUMNS = ("column", "arc_position", "E_visibility", "E_visibilityI",
                     "CognitiveDouble", "recognizable")


def _num(x) -> str:
    return "null" if x is None else repr(float(x))


def sign_to_dict(res) -> dict:
    lanes = []
    for lane in res.lanes:
        lanes.append({
            "lane": lane.lane,
            "maxCognitiveDistance": lane.max_cog_length,
            "minCognitiveDistance": lane.vrd,
            "timely": lane.timely,
            "viewpoints": [
                {
                    "column": v.column,
                    "arc_position": v.d_length,
                    "lateral_offset": v.d_width,
                    "position": [float(c) for c in v.position],
                    "E_geo": v.e_geo,
                    "E_occ": v.e_occ,
                    "E_sight": v.e_sight,
                    "E_visibility": v.e_visibility,
                    "E_visibilityI": v.e_visibility_ideal,
                    "occlusion_ratio": v.occlusion_ratio,
                    "sight_angle": v.sight_angle,
                    "CognitiveDouble": v.cognitive_ratio,
                    "recognizable": v.recognizable,
                    "degenerate": v.degenerate,
                }
                for v in lane.viewpoints
            ],
        })
    return {
        "id": res.sign_id,
        "type": res.sign_type,
        "side": res.side,
        "sight_distance": res.sight_distance,
        "field_length": res.field_length,
        "lane_count": res.lane_count,
        "flags": {k: bool(res.flags.get(k, False)) for k in FLAG_NAMES},
        "error": res.error,
        "lanes": lanes,
    }


def report_dict(results) -> dict:
    signs = [sign_to_dict(r) for r in results]
    return {
        "format": "signsight-report/1",
        "signs": signs,
        "summary": {
            "signs": len(signs),
            "failed": [s["id"] for s in signs if s["error"] is not None],
        },
    }


def format_text(results) -> str:
    out = []
    for r in results:
        d = sign_to_dict(r)
        out.append(f"sign {d['id']} type {d['type']} side {d['side']}")
        if d["error"] is not None:
            out.append(f"  error {d['error']}")
            out.append("")
            continue
        out.append(f"  sight_distance {_num(d['sight_distance'])} field_length {_num(d['field_length'])}"
                   f" lanes {d['lane_count']}")
        out.append("  flags " + " ".join(f"{k}={int(v)}" for k, v in d["flags"].items()))
        for lane in d["lanes"]:
            out.append(f"  lane {lane['lane']} maxCognitiveDistance {_num(lane['maxCognitiveDistance'])}"
                       f" minCognitiveDistance {_num(lane['minCognitiveDistance'])} timely {lane['timely']}")
            out.append("    " + " ".join(VIEWPOINT_COLUMNS))
            for v in lane["viewpoints"]:
                out.append(f"    {v['column']} {_num(v['arc_position'])} {_num(v['E_visibility'])}"
                           f" {_num(v['E_visibilityI'])} {_num(v['CognitiveDouble'])} {v['recognizable']}")
        out.append("")
    failed = [r.sign_id for r in results if r.error is not None]
    out.append(f"summary signs {len(results)} failed {len(failed)}" + (" " + " ".join(failed) if failed else ""))
    return "\n".join(out) + "\n"


def parse_text(text: str) -> dict:
    """Read a text report back into ``{sign_id: {lane: {...}}}``; used to
    check that both report formats agree."""
    signs: dict = {}
    cur = lane = None
    for raw in text.splitlines():
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "sign":
            cur = signs.setdefault(tok[1], {})
        elif tok[0] == "lane" and cur is not None:
            vals = dict(zip(tok[2::2], tok[3::2]))
            lane = cur.setdefault(int(tok[1]), {
                "maxCognitiveDistance": float(vals["maxCognitiveDistance"]),
                "minCognitiveDistance": float(vals["minCognitiveDistance"]),
                "timely": int(vals["timely"]),
                "viewpoints": [],
            })
        elif tok[0].isdigit() and lane is not None:
            col, pos, ev, evi, ratio, bit = tok
            lane["viewpoints"].append({
                "column": int(col), "arc_position": float(pos), "E_visibility": float(ev),
                "E_visibilityI": float(evi),
                "CognitiveDouble": None if ratio == "null" else float(ratio),
                "recognizable": int(bit),
            })
    return signs


def write_field_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sign", "lane", "column", "arc_position", "x", "y", "z", "E_visibility",
                    "E_visibilityI", "recognizable"])
        for r in results:
            for lane in r.lanes:
                for v in lane.viewpoints:
                    w.writerow([r.sign_id, lane.lane, v.column, repr(v.d_length),
                                *(repr(float(c)) for c in v.position), repr(v.e_visibility),
                                repr(v.e_visibility_ideal), v.recognizable])


def write_reports(out_dir, results, export_field: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.txt", out / "report.json"]
    paths[0].write_text(format_text(results))
    paths[1].write_text(json.dumps(report_dict(results), indent=2) + "\n")
    if export_field:
        paths.append(out / "field.csv")
        write_field_csv(paths[-1], results)
    return paths
