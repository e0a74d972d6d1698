"""Human-readable artifacts: score tables, trajectory and gaze drawings, bundles.

Everything here is a pure function of its inputs and produces byte-stable
text (fixed float formatting, sorted keys, no timestamps), so outputs can be
compared against golden files.
"""
from __future__ import annotations

import csv
import html
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import __version__
from . import geometry as geo
from .gaze import GazeRecord
from .ingest import RoomConfig
from .mapping import ENEMY, AgentRole, TrajectorySample
from .rollup import NOT_APPLICABLE, Score, ScoreSheet

PER_TRIAL, PER_TEAM = "per-trial", "per-team"
SCALE = 80.0  # SVG pixels per meter
MARGIN = 20.0
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22")


def fmt_score(value: Score) -> str:
    """Fixed 3-decimal display; not-applicable cells read "N/A", never 0."""
    return "N/A" if value is None else f"{value:.3f}"


# -- score tables --------------------------------------------------------------

def _table_columns(sheets: Union[ScoreSheet, dict[str, ScoreSheet]], layout: str):
    """``(hierarchy, [(header, values by node, bands by node)])``."""
    if layout == PER_TRIAL:
        if not isinstance(sheets, ScoreSheet):
            raise ValueError("per-trial layout takes a single ScoreSheet")
        cols = [(f"trial_{t.trial}", t.smoothed, t.bands) for t in sheets.trials]
        return sheets.hierarchy, cols
    if layout == PER_TEAM:
        if isinstance(sheets, ScoreSheet):
            sheets = {sheets.label or "team": sheets}
        if not sheets:
            raise ValueError("per-team layout needs at least one ScoreSheet")
        labels = sorted(sheets)
        cols = [(label, sheets[label].final.smoothed, sheets[label].final.bands) for label in labels]
        return sheets[labels[0]].hierarchy, cols
    raise ValueError(f"unknown layout {layout!r}")


def render_score_table(sheets: Union[ScoreSheet, dict[str, ScoreSheet]],
                       layout: str = PER_TRIAL) -> tuple[str, str]:
    """CSV and HTML tables of smoothed scores.

    Rows are hierarchy nodes ordered by level, then name.  Columns are the
    trials of one sheet (``per-trial``) or the final trial of several team
    sheets (``per-team``).  HTML cells carry ``band-above``/``band-at``/
    ``band-below``/``band-na`` classes for styling.
    """
    h, cols = _table_columns(sheets, layout)
    order = h.display_order()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "node", "name"] + [c[0] for c in cols])
    for nid in order:
        n = h.nodes[nid]
        w.writerow([n.level, nid, n.name] + [fmt_score(c[1][nid]) for c in cols])
    csv_text = buf.getvalue()

    lines = [
        "<!DOCTYPE html>",
        "<html><head><meta charset=\"utf-8\"><title>Scores</title>",
        "<style>",
        "table.scores{border-collapse:collapse;font-family:sans-serif}",
        "table.scores td,table.scores th{border:1px solid #999;padding:2px 8px}",
        "td.band-above{background:#9bd39b}",
        "td.band-at{background:#f3dc8c}",
        "td.band-below{background:#ec9a9a}",
        "td.band-na{background:#ddd;color:#555}",
        "</style></head><body>",
        f"<table class=\"scores\" data-layout=\"{layout}\">",
        "<thead><tr><th>Level</th><th>Node</th>" + "".join(f"<th>{html.escape(c[0])}</th>" for c in cols)
        + "</tr></thead>",
        "<tbody>",
    ]
    for nid in order:
        n = h.nodes[nid]
        cells = []
        for _, values, bands in cols:
            b = bands[nid]
            cls = "band-na" if b == NOT_APPLICABLE else f"band-{b}"
            cells.append(f"<td class=\"{cls}\">{fmt_score(values[nid])}</td>")
        lines.append(f"<tr class=\"level-{n.level}\" data-node=\"{html.escape(nid)}\"><td>{n.level}</td>"
                     f"<td>{html.escape(n.name)}</td>" + "".join(cells) + "</tr>")
    lines += ["</tbody></table>", "</body></html>", ""]
    return csv_text, "\n".join(lines)


# -- SVG drawings --------------------------------------------------------------

@dataclass
class _Canvas:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def for_room(cls, config: RoomConfig) -> "_Canvas":
        pts = np.concatenate([config.room_polygon, config.entry_zone])
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def width(self) -> float:
        return float((self.hi[0] - self.lo[0]) * SCALE + 2 * MARGIN)

    @property
    def height(self) -> float:
        return float((self.hi[1] - self.lo[1]) * SCALE + 2 * MARGIN)

    def xy(self, p) -> tuple[float, float]:
        # map y grows up, SVG y grows down
        return (MARGIN + (p[0] - self.lo[0]) * SCALE, MARGIN + (self.hi[1] - p[1]) * SCALE)

    def points(self, pts) -> str:
        return " ".join("{:.2f},{:.2f}".format(*self.xy(p)) for p in geo.as_points(pts))


def _room_layer(c: _Canvas, config: RoomConfig, dx: float = 0.0) -> list[str]:
    out = [f"<g class=\"room\" transform=\"translate({dx:.2f},0)\">",
           f"<polygon class=\"room-outline\" points=\"{c.points(config.room_polygon)}\" "
           "fill=\"#fafafa\" stroke=\"#222\" stroke-width=\"2\"/>",
           f"<polygon class=\"entry-zone\" points=\"{c.points(config.entry_zone)}\" "
           "fill=\"#e8f0ff\" stroke=\"#6688cc\" stroke-dasharray=\"4 3\"/>"]
    for name in sorted(config.pod_regions):
        poly = config.pod_regions[name]
        x, y = c.xy(geo.polygon_centroid(poly))
        out.append(f"<polygon class=\"pod\" data-pod=\"{html.escape(name)}\" points=\"{c.points(poly)}\" "
                   "fill=\"none\" stroke=\"#999\" stroke-dasharray=\"2 2\"/>")
        out.append(f"<text class=\"pod-label\" x=\"{x:.2f}\" y=\"{y:.2f}\" font-size=\"12\" "
                   f"text-anchor=\"middle\" fill=\"#999\">{html.escape(name)}</text>")
    for seg in np.asarray(config.wall_segments).reshape(-1, 2, 2):
        (x1, y1), (x2, y2) = c.xy(seg[0]), c.xy(seg[1])
        out.append(f"<line class=\"wall\" x1=\"{x1:.2f}\" y1=\"{y1:.2f}\" x2=\"{x2:.2f}\" y2=\"{y2:.2f}\" "
                   "stroke=\"#222\" stroke-width=\"3\"/>")
    out.append("</g>")
    return out


def _svg(width: float, height: float, body: list[str]) -> str:
    head = (f"<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0f}\" height=\"{height:.0f}\" "
            f"viewBox=\"0 0 {width:.2f} {height:.2f}\">")
    return "\n".join([head] + body + ["</svg>", ""])


def _trajectory_layer(c: _Canvas, trajectories: dict[int, list[TrajectorySample]],
                      roles: dict[int, AgentRole], dx: float, title: str) -> list[str]:
    out = [f"<g class=\"trajectories\" transform=\"translate({dx:.2f},0)\">",
           f"<text x=\"{MARGIN:.2f}\" y=\"14\" font-size=\"13\">{html.escape(title)}</text>"]
    members = sorted((tid for tid, r in roles.items() if r.is_team and tid in trajectories),
                     key=lambda t: (roles[t].entry_order if roles[t].entry_order is not None else 1 << 30, t))
    for k, tid in enumerate(members):
        pts = [s.map_position for s in trajectories[tid] if np.all(np.isfinite(s.map_position))]
        if not pts:
            continue
        color = PALETTE[k % len(PALETTE)]
        out.append(f"<polyline class=\"member\" data-track=\"{tid}\" points=\"{c.points(pts)}\" "
                   f"fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>")
        x, y = c.xy(pts[-1])
        out.append(f"<text class=\"member-label\" x=\"{x + 4:.2f}\" y=\"{y - 4:.2f}\" font-size=\"11\" "
                   f"fill=\"{color}\">{tid}</text>")
    for tid in sorted(t for t, r in roles.items() if r.role == ENEMY and t in trajectories):
        pts = np.array([s.map_position for s in trajectories[tid] if np.all(np.isfinite(s.map_position))])
        if len(pts) == 0:
            continue
        x, y = c.xy(np.median(pts, axis=0))
        out.append(f"<g class=\"enemy\" data-track=\"{tid}\"><line x1=\"{x - 6:.2f}\" y1=\"{y - 6:.2f}\" "
                   f"x2=\"{x + 6:.2f}\" y2=\"{y + 6:.2f}\" stroke=\"#c00\" stroke-width=\"3\"/>"
                   f"<line x1=\"{x - 6:.2f}\" y1=\"{y + 6:.2f}\" x2=\"{x + 6:.2f}\" y2=\"{y - 6:.2f}\" "
                   "stroke=\"#c00\" stroke-width=\"3\"/></g>")
    out.append("</g>")
    return out


def render_trajectory_overlay(trajectories: dict[int, list[TrajectorySample]], roles: dict[int, AgentRole],
                              config: RoomConfig,
                              reference: Optional[tuple[dict[int, list[TrajectorySample]],
                                                        dict[int, AgentRole]]] = None) -> str:
    """Room, entry zone and PODs with one polyline per team member and a
    marker per enemy.  With a ``reference`` (trajectories, roles) pair the
    reference run is drawn on the left and the team on the right."""
    c = _Canvas.for_room(config)
    body: list[str] = []
    dx = 0.0
    if reference is not None:
        body += _room_layer(c, config, 0.0)
        body += _trajectory_layer(c, reference[0], reference[1], 0.0, "Reference")
        dx = c.width
    body += _room_layer(c, config, dx)
    body += _trajectory_layer(c, trajectories, roles, dx, "Team" if reference is not None else "")
    return _svg(c.width + dx, c.height, body)


def render_gaze_overlay(gaze: dict[int, dict[int, GazeRecord]], config: RoomConfig,
                        frames: list[int]) -> str:
    """Map-space gaze triangles, clipped to the room, at the selected frames."""
    c = _Canvas.for_room(config)
    body = _room_layer(c, config)
    body.append("<g class=\"gaze\">")
    for k, tid in enumerate(sorted(gaze)):
        color = PALETTE[k % len(PALETTE)]
        for f in sorted(frames):
            rec = gaze[tid].get(f)
            if rec is None or rec.map_triangle is None or len(rec.map_triangle) < 3:
                continue
            body.append(f"<polygon class=\"gaze-triangle\" data-track=\"{tid}\" data-frame=\"{f}\" "
                        f"points=\"{c.points(rec.map_triangle)}\" fill=\"{color}\" fill-opacity=\"0.35\" "
                        f"stroke=\"{color}\"/>")
    body.append("</g>")
    return _svg(c.width, c.height, body)


def busiest_gaze_frame(gaze: dict[int, dict[int, GazeRecord]]) -> Optional[int]:
    """Earliest frame with the most map-space gaze triangles."""
    counts: dict[int, int] = {}
    for recs in gaze.values():
        for f, r in recs.items():
            if r.map_triangle is not None and len(r.map_triangle) >= 3:
                counts[f] = counts.get(f, 0) + 1
    if not counts:
        return None
    return min(counts, key=lambda f: (-counts[f], f))


# -- bundle --------------------------------------------------------------------

@dataclass
class ReportBundle:
    """Machine-readable summary of one report run."""
    metadata: dict
    metrics: dict[str, dict]  # trial label -> metric name -> MetricResult dict
    score_sheet: Optional[dict]
    assets: list[str]
    parameters: dict
    engine_version: str = field(default=__version__)

    def to_dict(self) -> dict:
        return {"engine_version": self.engine_version, "metadata": self.metadata, "metrics": self.metrics,
                "score_sheet": self.score_sheet, "assets": sorted(self.assets), "parameters": self.parameters}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
