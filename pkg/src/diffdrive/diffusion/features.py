"""Scene tensorization: fixed-cap, ego-frame feature arrays with validity masks.

All positions are expressed in the frame of the ego's current pose
(translation + rotation) and scaled by POS_SCALE so the networks see O(1)
inputs. Padded slots carry zero features and False masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..world.geometry import wrap_angle
from ..world.scene import AGENT_KINDS, POLYLINE_KINDS, Scene, WorldParams

POS_SCALE = 0.1
AGENT_FEAT_DIM = 11  # x, y, cos h, sin h, v, length, width, kind one-hot (3), is_ego
POLY_FEAT_DIM = 7  # x, y, cos h, sin h, kind one-hot (3)


@dataclass
class SceneFeatures:
    agent_feats: np.ndarray  # [N_cap, T_h, AGENT_FEAT_DIM]
    agent_step_pose: np.ndarray  # [N_cap, T_h, 3] ego-frame pose per history step
    agent_mask: np.ndarray  # [N_cap] bool
    agent_pose: np.ndarray  # [N_cap, 3] current ego-frame pose
    map_feats: np.ndarray  # [M_cap, P, POLY_FEAT_DIM]
    map_mask: np.ndarray
    map_pose: np.ndarray  # [M_cap, 3]
    route_feats: np.ndarray  # [R_cap, P, POLY_FEAT_DIM]
    route_mask: np.ndarray
    route_pose: np.ndarray
    start_states: np.ndarray  # [N_cap, 4] global-frame rollout anchors (zeros when padded)
    n_agents: int
    frame: tuple[float, float, float]  # global pose of the ego at the scene time


def ego_frame(scene: Scene) -> tuple[float, float, float]:
    e = scene.ego.states[-1]
    return float(e[0]), float(e[1]), float(e[2])


def to_frame_xy(xy: np.ndarray, frame) -> np.ndarray:
    tx, ty, phi = frame
    c, s = np.cos(phi), np.sin(phi)
    dx = xy[..., 0] - tx
    dy = xy[..., 1] - ty
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def to_frame_pose(pose: np.ndarray, frame) -> np.ndarray:
    xy = to_frame_xy(pose[..., :2], frame)
    h = wrap_angle(pose[..., 2] - frame[2])
    return np.concatenate([xy, np.asarray(h)[..., None]], axis=-1)


def _kind_onehot(kind: str, kinds: tuple[str, ...]) -> np.ndarray:
    v = np.zeros(len(kinds))
    v[kinds.index(kind)] = 1.0
    return v


def _state_features(states: np.ndarray, frame, length: float, width: float,
                    kind: str, is_ego: bool) -> np.ndarray:
    """Per-step agent features [T, AGENT_FEAT_DIM] from global states [T, 4]."""
    xy = to_frame_xy(states[:, :2], frame) * POS_SCALE
    h = wrap_angle(states[:, 2] - frame[2])
    T = states.shape[0]
    static = np.concatenate(
        [[length * POS_SCALE, width * POS_SCALE], _kind_onehot(kind, AGENT_KINDS), [float(is_ego)]]
    )
    return np.concatenate(
        [xy, np.cos(h)[:, None], np.sin(h)[:, None], states[:, 3:4] * POS_SCALE,
         np.tile(static, (T, 1))],
        axis=1,
    )


def _poly_features(poly, frame) -> np.ndarray:
    xy = to_frame_xy(poly.waypoints[:, :2], frame) * POS_SCALE
    h = wrap_angle(poly.waypoints[:, 2] - frame[2])
    kind = np.tile(_kind_onehot(poly.kind, POLYLINE_KINDS), (poly.waypoints.shape[0], 1))
    return np.concatenate([xy, np.cos(h)[:, None], np.sin(h)[:, None], kind], axis=1)


def _pose_rows(states: np.ndarray, frame) -> np.ndarray:
    xy = to_frame_xy(states[..., :2], frame)
    h = wrap_angle(states[..., 2] - frame[2])
    return np.concatenate([xy, np.asarray(h)[..., None]], axis=-1)


def tensorize_scene(scene: Scene, params: WorldParams) -> SceneFeatures:
    frame = ego_frame(scene)
    N, M, R, P = params.agent_cap, params.polyline_cap, params.route_cap, params.waypoints_per_polyline
    T = scene.history_len

    agent_feats = np.zeros((N, T, AGENT_FEAT_DIM))
    agent_step_pose = np.zeros((N, T, 3))
    agent_mask = np.zeros(N, dtype=bool)
    agent_pose = np.zeros((N, 3))
    start_states = np.zeros((N, 4))
    agents = scene.agents[:N]
    for i, a in enumerate(agents):
        agent_feats[i] = _state_features(a.states, frame, a.length, a.width, a.kind,
                                         a.agent_id == scene.ego_id)
        agent_step_pose[i] = _pose_rows(a.states, frame)
        agent_pose[i] = agent_step_pose[i, -1]
        start_states[i] = a.states[-1]
        agent_mask[i] = True

    map_feats = np.zeros((M, P, POLY_FEAT_DIM))
    map_mask = np.zeros(M, dtype=bool)
    map_pose = np.zeros((M, 3))
    for i, poly in enumerate(scene.map_polylines[:M]):
        feats = _poly_features(poly, frame)
        map_feats[i, : feats.shape[0]] = feats[:P]
        map_pose[i] = _pose_rows(poly.waypoints[0], frame)
        map_mask[i] = True

    route_feats = np.zeros((R, P, POLY_FEAT_DIM))
    route_mask = np.zeros(R, dtype=bool)
    route_pose = np.zeros((R, 3))
    for i, poly in enumerate(scene.route_polylines[:R]):
        feats = _poly_features(poly, frame)
        route_feats[i, : feats.shape[0]] = feats[:P]
        route_pose[i] = _pose_rows(poly.waypoints[0], frame)
        route_mask[i] = True

    return SceneFeatures(
        agent_feats=agent_feats,
        agent_step_pose=agent_step_pose,
        agent_mask=agent_mask,
        agent_pose=agent_pose,
        map_feats=map_feats,
        map_mask=map_mask,
        map_pose=map_pose,
        route_feats=route_feats,
        route_mask=route_mask,
        route_pose=route_pose,
        start_states=start_states,
        n_agents=len(agents),
        frame=frame,
    )


def tensorize_future(scene: Scene, future: np.ndarray, params: WorldParams) -> tuple[np.ndarray, np.ndarray]:
    """Future-state features for the evaluator: ([N_cap, T_f, AGENT_FEAT_DIM],
    first-step poses [N_cap, 3]), in the scene's ego frame."""
    frame = ego_frame(scene)
    N = params.agent_cap
    T = future.shape[1]
    feats = np.zeros((N, T, AGENT_FEAT_DIM))
    pose = np.zeros((N, 3))
    for i, a in enumerate(scene.agents[:N]):
        feats[i] = _state_features(future[i], frame, a.length, a.width, a.kind,
                                   a.agent_id == scene.ego_id)
        pose[i] = _pose_rows(future[i, 0], frame)
    return feats, pose


def scaled_ego_frame_states(scene: Scene, states: np.ndarray) -> np.ndarray:
    """Ego-frame, POS_SCALE-scaled (x, y, heading, speed) rows; the evaluator's
    reconstruction target."""
    frame = ego_frame(scene)
    xy = to_frame_xy(states[..., :2], frame) * POS_SCALE
    h = wrap_angle(states[..., 2] - frame[2])
    v = states[..., 3] * POS_SCALE
    return np.concatenate([xy, np.asarray(h)[..., None], np.asarray(v)[..., None]], axis=-1)
