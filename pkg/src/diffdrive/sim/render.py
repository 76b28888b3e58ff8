"""Deterministic top-down SVG rendering of scenes and episode traces."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..world.geometry import rect_corners
from ..world.scene import Scene, ScenarioLog

_COLORS = {
    "lane_center": "#b0b0b0",
    "road_edge": "#707070",
    "route": "#4f9dd0",
    "ego": "#d9534f",
    "agent": "#3a7f4f",
    "plan": "#e8a33d",
    "realized": "#d9534f",
}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _poly_points(waypoints: np.ndarray) -> str:
    return " ".join(f"{_fmt(p[0])},{_fmt(-p[1])}" for p in waypoints)


def _rect_path(x, y, heading, length, width) -> str:
    quad = rect_corners(float(x), float(y), float(heading), length, width)
    return "M " + " L ".join(f"{_fmt(p[0])} {_fmt(-p[1])}" for p in quad) + " Z"


class _Svg:
    def __init__(self):
        self.parts: list[str] = []
        self.min_x = self.min_y = np.inf
        self.max_x = self.max_y = -np.inf

    def include(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = -np.asarray(ys, dtype=float)
        self.min_x = min(self.min_x, xs.min())
        self.max_x = max(self.max_x, xs.max())
        self.min_y = min(self.min_y, ys.min())
        self.max_y = max(self.max_y, ys.max())

    def polyline(self, waypoints, color, width=0.3, dash=None):
        self.include(waypoints[:, 0], waypoints[:, 1])
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{_poly_points(waypoints)}" fill="none" '
            f'stroke="{color}" stroke-width="{width}"{dash_attr}/>'
        )

    def footprint(self, x, y, heading, length, width, color, opacity=1.0):
        self.include([x - length, x + length], [y - length, y + length])
        self.parts.append(
            f'<path d="{_rect_path(x, y, heading, length, width)}" fill="{color}" '
            f'fill-opacity="{_fmt(opacity)}" stroke="black" stroke-width="0.08"/>'
        )

    def document(self) -> str:
        pad = 5.0
        if not np.isfinite(self.min_x):
            self.min_x = self.min_y = -10.0
            self.max_x = self.max_y = 10.0
        vb = (self.min_x - pad, self.min_y - pad,
              self.max_x - self.min_x + 2 * pad, self.max_y - self.min_y + 2 * pad)
        header = (
            '<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="{_fmt(vb[0])} {_fmt(vb[1])} {_fmt(vb[2])} {_fmt(vb[3])}">'
        )
        return header + "".join(self.parts) + "</svg>"


def _draw_map(svg: _Svg, map_polylines, route_polylines):
    for poly in map_polylines:
        svg.polyline(poly.waypoints, _COLORS[poly.kind],
                     width=0.25 if poly.kind == "lane_center" else 0.4,
                     dash="1.5,1.5" if poly.kind == "lane_center" else None)
    for poly in route_polylines:
        svg.polyline(poly.waypoints, _COLORS["route"], width=0.5)


def render_scene_svg(scene: Scene, future: np.ndarray | None = None) -> str:
    """Single-frame view of a scene, optionally with a candidate joint future."""
    svg = _Svg()
    _draw_map(svg, scene.map_polylines, scene.route_polylines)
    for i, a in enumerate(scene.agents):
        color = _COLORS["ego"] if a.agent_id == scene.ego_id else _COLORS["agent"]
        s = a.states[-1]
        svg.footprint(s[0], s[1], s[2], a.length, a.width, color)
        if future is not None:
            svg.polyline(np.asarray(future)[i, :, :2], color, width=0.25)
    return svg.document()


def render_episode(trace, log: ScenarioLog, out_dir) -> list[Path]:
    """One SVG per realized step (steps + 1 frames): map, agent footprints,
    the active plan, and the realized ego path so far."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ego_meta = next(a for a in log.tracks if a.agent_id == log.ego_id)
    t0 = log.history_len - 1
    paths = []
    n_frames = trace.ego_states.shape[0]
    for t in range(n_frames):
        svg = _Svg()
        _draw_map(svg, log.map_polylines, log.route_polylines)
        active = [p for p in trace.plans if p["t"] <= t0 + t]
        if active and active[-1]["futures"]:
            plan = active[-1]
            for j, fut in enumerate(plan["futures"]):
                if j == plan["chosen"]:
                    continue
                svg.polyline(fut[0, :, :2], _COLORS["plan"], width=0.12)
            svg.polyline(plan["futures"][plan["chosen"]][0, :, :2], _COLORS["plan"], width=0.35)
        svg.polyline(trace.ego_states[: t + 1, :2], _COLORS["realized"], width=0.3)
        for i, (_, _, length, width) in enumerate(trace.bg_meta):
            s = trace.bg_states[i, t]
            svg.footprint(s[0], s[1], s[2], length, width, _COLORS["agent"])
        e = trace.ego_states[t]
        svg.footprint(e[0], e[1], e[2], ego_meta.length, ego_meta.width, _COLORS["ego"])
        path = out_dir / f"frame_{t:04d}.svg"
        path.write_text(svg.document())
        paths.append(path)
    return paths
