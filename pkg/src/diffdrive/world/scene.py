"""Scene data model: agent tracks, map polylines, scenario logs.

A ScenarioLog stores full tracks (history + logged future) for every agent;
a Scene is the conditioning context cut from a log at some timestep (history
window only). Both live in a global frame; model-facing tensorization
normalizes to the ego pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ValidationError
from .geometry import wrap_angle

AGENT_KINDS = ("vehicle", "pedestrian", "cyclist")
POLYLINE_KINDS = ("lane_center", "road_edge", "route")

MAX_WAYPOINT_SPACING = 5.0


@dataclass(frozen=True)
class WorldParams:
    """Shared world constants used by dynamics, predicates, and tensorization."""

    dt: float = 0.5
    history_len: int = 4
    future_len: int = 10
    agent_cap: int = 8
    polyline_cap: int = 12
    route_cap: int = 4
    waypoints_per_polyline: int = 20
    lane_half_width: float = 2.0
    accel_limit: float = 6.0
    yaw_rate_limit: float = 1.0


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        if self.speed < 0:
            raise ValidationError(f"speed must be non-negative, got {self.speed}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.speed])


@dataclass
class AgentTrack:
    agent_id: int
    kind: str
    length: float
    width: float
    states: np.ndarray  # [T, 4] of (x, y, heading, speed)

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValidationError(f"unknown agent kind {self.kind!r}")
        if self.length <= 0 or self.width <= 0:
            raise ValidationError(f"agent {self.agent_id}: footprint must have positive size")
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != 4:
            raise ValidationError(f"agent {self.agent_id}: states must be [T, 4]")
        if (self.states[:, 3] < -1e-12).any():
            raise ValidationError(f"agent {self.agent_id}: negative speed in track")

    def window(self, start: int, stop: int) -> "AgentTrack":
        return AgentTrack(self.agent_id, self.kind, self.length, self.width, self.states[start:stop].copy())


@dataclass
class MapPolyline:
    kind: str
    waypoints: np.ndarray  # [N_p, 3] of (x, y, heading)

    def __post_init__(self):
        if self.kind not in POLYLINE_KINDS:
            raise ValidationError(f"unknown polyline kind {self.kind!r}")
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 3:
            raise ValidationError("polyline waypoints must be [N_p, 3]")
        spacing = np.linalg.norm(np.diff(self.waypoints[:, :2], axis=0), axis=1)
        if spacing.size and spacing.max() > MAX_WAYPOINT_SPACING + 1e-9:
            raise ValidationError(
                f"waypoint spacing {spacing.max():.2f} m exceeds {MAX_WAYPOINT_SPACING} m"
            )


@dataclass
class Scene:
    """Conditioning context at one timestep: agent histories plus map and route."""

    dt: float
    history_len: int
    future_len: int
    ego_id: int
    agents: list[AgentTrack]
    map_polylines: list[MapPolyline]
    route_polylines: list[MapPolyline]
    target_distance: float
    scenario_id: str = ""

    def __post_init__(self):
        ego = [a for a in self.agents if a.agent_id == self.ego_id]
        if len(ego) != 1:
            raise ValidationError(f"scene must contain exactly one ego agent, found {len(ego)}")
        if not self.map_polylines:
            raise ConfigError("scene has an empty map")
        for a in self.agents:
            if a.states.shape[0] != self.history_len:
                raise ValidationError(
                    f"agent {a.agent_id}: history length {a.states.shape[0]} != {self.history_len}"
                )

    @property
    def ego(self) -> AgentTrack:
        return next(a for a in self.agents if a.agent_id == self.ego_id)

    def current_states(self) -> np.ndarray:
        """Last history state per agent, [n_agents, 4], in scene agent order."""
        return np.stack([a.states[-1] for a in self.agents])

    def lane_centers(self) -> list[MapPolyline]:
        return [p for p in self.map_polylines if p.kind == "lane_center"]


def order_agents_for_ego(tracks: list[AgentTrack], ego_id: int, t_index: int, cap: int) -> list[AgentTrack]:
    """Ego first, then others by Euclidean distance to ego at t_index (ties by agent_id),
    truncated to cap."""
    ego = next(a for a in tracks if a.agent_id == ego_id)
    ego_xy = ego.states[t_index, :2]
    others = [a for a in tracks if a.agent_id != ego_id]
    others.sort(key=lambda a: (float(np.linalg.norm(a.states[t_index, :2] - ego_xy)), a.agent_id))
    return [ego] + others[: max(0, cap - 1)]


def order_polylines_for_ego(polys: list[MapPolyline], ego_xy: np.ndarray, cap: int) -> list[MapPolyline]:
    """Polylines by min waypoint distance to ego (ties by original index), truncated to cap."""
    keyed = sorted(
        enumerate(polys),
        key=lambda kv: (float(np.min(np.linalg.norm(kv[1].waypoints[:, :2] - ego_xy, axis=1))), kv[0]),
    )
    return [p for _, p in keyed[:cap]]


@dataclass
class ScenarioLog:
    """Full logged scenario: tracks over history + future, map, and route."""

    scenario_id: str
    template: str
    dt: float
    history_len: int
    ego_id: int
    tracks: list[AgentTrack]
    map_polylines: list[MapPolyline]
    route_polylines: list[MapPolyline]
    target_distance: float
    _feature_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lengths = {a.states.shape[0] for a in self.tracks}
        if len(lengths) != 1:
            raise ValidationError(f"scenario {self.scenario_id}: track lengths differ: {sorted(lengths)}")
        self.n_steps = lengths.pop()
        if self.n_steps < self.history_len:
            raise ValidationError(f"scenario {self.scenario_id}: shorter than its declared history")

    @property
    def future_len(self) -> int:
        return self.n_steps - self.history_len

    def states_at(self, t_index: int) -> np.ndarray:
        """Per-agent states at an absolute step, holding final states past the log end."""
        t = min(t_index, self.n_steps - 1)
        return np.stack([a.states[t] for a in self.tracks])

    def scene_at(self, t_index: int, params: WorldParams, ego_track: AgentTrack | None = None) -> Scene:
        """Cut a Scene whose history window ends at t_index (inclusive).

        ego_track, when given, overrides the logged ego history (closed-loop
        replanning feeds the realized ego trajectory back in). Background
        windows extend past the log end by holding final states.
        """
        start = t_index - params.history_len + 1
        if start < 0:
            raise ValidationError(f"t_index {t_index} leaves no room for history {params.history_len}")
        tracks = []
        for a in self.tracks:
            if ego_track is not None and a.agent_id == self.ego_id:
                tracks.append(ego_track)
                continue
            idx = np.minimum(np.arange(start, t_index + 1), self.n_steps - 1)
            tracks.append(AgentTrack(a.agent_id, a.kind, a.length, a.width, a.states[idx]))
        agents = order_agents_for_ego(tracks, self.ego_id, -1, params.agent_cap)
        ego_xy = agents[0].states[-1, :2]
        return Scene(
            dt=self.dt,
            history_len=params.history_len,
            future_len=params.future_len,
            ego_id=self.ego_id,
            agents=agents,
            map_polylines=order_polylines_for_ego(self.map_polylines, ego_xy, params.polyline_cap),
            route_polylines=order_polylines_for_ego(self.route_polylines, ego_xy, params.route_cap),
            target_distance=self.target_distance,
            scenario_id=self.scenario_id,
        )

    def training_example(self, params: WorldParams) -> tuple[Scene, np.ndarray]:
        """Scene at the log's nominal current time plus the ground-truth future.

        The future array is [n_scene_agents, future_len, 4], rows aligned with
        the scene's agent order.
        """
        t0 = self.history_len - 1
        scene = self.scene_at(t0, params)
        by_id = {a.agent_id: a for a in self.tracks}
        fut = np.stack(
            [by_id[a.agent_id].states[t0 + 1 : t0 + 1 + params.future_len] for a in scene.agents]
        )
        if fut.shape[1] < params.future_len:
            raise ValidationError(
                f"scenario {self.scenario_id}: log future {fut.shape[1]} < required {params.future_len}"
            )
        return scene, fut


SCENARIO_FORMAT = "diffdrive-scenario"
SCENARIO_VERSION = 1


def scenario_to_json(log: ScenarioLog) -> str:
    doc = {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "scenario_id": log.scenario_id,
        "template": log.template,
        "dt": log.dt,
        "history_len": log.history_len,
        "ego_id": log.ego_id,
        "target_distance": log.target_distance,
        "tracks": [
            {
                "agent_id": a.agent_id,
                "kind": a.kind,
                "length": a.length,
                "width": a.width,
                "states": a.states.tolist(),
            }
            for a in log.tracks
        ],
        "map": [{"kind": p.kind, "waypoints": p.waypoints.tolist()} for p in log.map_polylines],
        "route": [{"kind": p.kind, "waypoints": p.waypoints.tolist()} for p in log.route_polylines],
    }
    return json.dumps(doc, sort_keys=True)


def scenario_from_json(text: str) -> ScenarioLog:
    doc = json.loads(text)
    if doc.get("format") != SCENARIO_FORMAT:
        raise ValidationError("not a scenario file")
    if doc.get("version") != SCENARIO_VERSION:
        raise ValidationError(f"unsupported scenario version {doc.get('version')}")
    return ScenarioLog(
        scenario_id=doc["scenario_id"],
        template=doc["template"],
        dt=doc["dt"],
        history_len=doc["history_len"],
        ego_id=doc["ego_id"],
        tracks=[
            AgentTrack(t["agent_id"], t["kind"], t["length"], t["width"], np.array(t["states"]))
            for t in doc["tracks"]
        ],
        map_polylines=[MapPolyline(p["kind"], np.array(p["waypoints"])) for p in doc["map"]],
        route_polylines=[MapPolyline(p["kind"], np.array(p["waypoints"])) for p in doc["route"]],
        target_distance=doc["target_distance"],
    )
