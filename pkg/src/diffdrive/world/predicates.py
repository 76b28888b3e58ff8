"""Geometric scene predicates: ego collision, off-road, and route progress."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ValidationError
from .geometry import PolylineChain, min_distance_to_polylines, rect_corners, rects_overlap
from .scene import Scene, WorldParams


@dataclass
class CollisionReport:
    """Per-step ego-vs-agent overlap flags [T, n_agents] (ego column False)."""

    matrix: np.ndarray
    first_step: int | None

    def any(self) -> bool:
        return self.first_step is not None


def check_collision(scene: Scene, futures: np.ndarray) -> CollisionReport:
    """Oriented-rectangle (separating-axis) overlap between the ego footprint and
    every other agent footprint at each future step.

    futures is [n_agents, T, 4] aligned with scene.agents; agents beyond the
    scene's list are rejected.
    """
    futures = np.asarray(futures, dtype=float)
    if futures.ndim != 3 or futures.shape[0] != len(scene.agents) or futures.shape[2] != 4:
        raise ValidationError(
            f"futures shape {futures.shape} does not match scene with {len(scene.agents)} agents"
        )
    ego_idx = next(i for i, a in enumerate(scene.agents) if a.agent_id == scene.ego_id)
    T = futures.shape[1]
    matrix = np.zeros((T, len(scene.agents)), dtype=bool)
    ego = scene.agents[ego_idx]
    for t in range(T):
        ex, ey, eh = futures[ego_idx, t, 0], futures[ego_idx, t, 1], futures[ego_idx, t, 2]
        ego_quad = rect_corners(ex, ey, eh, ego.length, ego.width)
        for i, agent in enumerate(scene.agents):
            if i == ego_idx:
                continue
            quad = rect_corners(
                futures[i, t, 0], futures[i, t, 1], futures[i, t, 2], agent.length, agent.width
            )
            matrix[t, i] = rects_overlap(ego_quad, quad)
    hits = np.argwhere(matrix.any(axis=1))
    first = int(hits[0, 0]) if hits.size else None
    return CollisionReport(matrix=matrix, first_step=first)


def check_offroad(
    scene: Scene, ego_future: np.ndarray, params: WorldParams | None = None
) -> tuple[np.ndarray, int | None]:
    """Per-step off-road flags for the ego plus the first off-road step.

    A step is off-road when the ego center's distance to the nearest
    lane-center polyline exceeds lane_half_width + ego_width / 2; the exact
    threshold counts as on-road.
    """
    params = params or WorldParams(dt=scene.dt)
    lanes = scene.lane_centers()
    if not lanes:
        raise ConfigError("off-road check needs at least one lane_center polyline")
    ego_future = np.asarray(ego_future, dtype=float)
    pts = np.atleast_2d(ego_future)[:, :2]
    chains = [PolylineChain(p.waypoints) for p in lanes]
    dist = min_distance_to_polylines(pts, chains)
    threshold = params.lane_half_width + scene.ego.width / 2.0
    flags = dist > threshold + 1e-12
    hits = np.argwhere(flags)
    first = int(hits[0, 0]) if hits.size else None
    return flags, first


def chain_from_polylines(polys) -> PolylineChain:
    """Concatenate polylines into one chain, dropping duplicated joints."""
    pts = np.concatenate([p.waypoints for p in polys], axis=0)
    keep = np.concatenate([[True], np.linalg.norm(np.diff(pts[:, :2], axis=0), axis=1) > 1e-9])
    return PolylineChain(pts[keep])


def route_chain(scene: Scene) -> PolylineChain:
    if not scene.route_polylines:
        raise ConfigError("scene has no route polylines")
    return chain_from_polylines(scene.route_polylines)


def progress_per_step(scene: Scene, ego_future: np.ndarray) -> np.ndarray:
    """Arc-length advance along the route from the ego's start, per future step."""
    chain = route_chain(scene)
    start_xy = scene.ego.states[-1, :2]
    s0, _ = chain.project(start_xy)
    s, _ = chain.project_many(np.atleast_2d(np.asarray(ego_future, dtype=float))[:, :2])
    return np.maximum(0.0, s - s0)


def progress_along_route(scene: Scene, ego_future: np.ndarray) -> float:
    """Fraction of the scenario's target distance covered along the route.

    0 for a stationary ego; can exceed 1 when the ego outruns the target.
    """
    adv = progress_per_step(scene, ego_future)
    if scene.target_distance <= 0:
        raise ConfigError(f"scenario {scene.scenario_id}: non-positive target distance")
    return float(adv[-1] / scene.target_distance)
