"""Scripted scenario synthesis producing dynamics-consistent training logs.

Five templates: straight lane-follow, curved road, lead-vehicle slowdown,
unprotected turn with a crossing agent, and lane change. Followers use an
IDM-style car-following rule; turners track precomputed paths with
trapezoidal speed profiles. Every logged trajectory is produced by stepping
the package dynamics, so fitting actions back from states is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, ValidationError
from ..rng import make_rng
from .dynamics import rollout_dynamics
from .geometry import PolylineChain, resample_polyline, wrap_angle
from .predicates import check_collision, check_offroad, progress_per_step
from .scene import AgentTrack, MapPolyline, ScenarioLog, WorldParams

TEMPLATES = ("straight", "curved", "lead_slowdown", "unprotected_turn", "lane_change")

LANE_WIDTH = 3.5
EGO_SIZE = (4.8, 2.0)
CAR_SIZE = (4.6, 1.9)
BIKE_SIZE = (1.9, 0.7)

# IDM parameters (car-following)
IDM_V0_FALLBACK = 8.0
IDM_S0 = 2.0
IDM_T = 1.5
IDM_A = 2.0
IDM_B = 3.5
IDM_DELTA = 4


@dataclass
class SynthConfig:
    n_scenarios: int = 200
    future_len: int = 10  # logged future steps beyond the history window
    templates: tuple[str, ...] = TEMPLATES
    params: WorldParams = field(default_factory=WorldParams)

    def __post_init__(self):
        for t in self.templates:
            if t not in TEMPLATES:
                raise ConfigError(f"unknown scenario template {t!r}")
        if self.n_scenarios < 1:
            raise ConfigError("n_scenarios must be >= 1")


def _straight(origin, heading, length, step=1.0):
    n = max(2, int(np.ceil(length / step)) + 1)
    s = np.linspace(0.0, length, n)
    x = origin[0] + s * np.cos(heading)
    y = origin[1] + s * np.sin(heading)
    return np.column_stack([x, y, np.full(n, heading)])


def _arc(start_pose, radius, angle, step=1.0):
    """Arc from a start pose; positive angle turns left."""
    n = max(2, int(np.ceil(abs(angle) * radius / step)) + 1)
    phis = np.linspace(0.0, angle, n)
    sign = 1.0 if angle >= 0 else -1.0
    cx = start_pose[0] - sign * radius * np.sin(start_pose[2])
    cy = start_pose[1] + sign * radius * np.cos(start_pose[2])
    headings = start_pose[2] + phis
    x = cx + sign * radius * np.sin(headings)
    y = cy - sign * radius * np.cos(headings)
    return np.column_stack([x, y, headings])


def _concat_paths(*paths):
    out = [paths[0]]
    for p in paths[1:]:
        out.append(p[1:])
    return np.concatenate(out, axis=0)


def _offset_path(path, offset):
    """Shift a path laterally (positive = left of heading)."""
    out = path.copy()
    out[:, 0] = path[:, 0] - offset * np.sin(path[:, 2])
    out[:, 1] = path[:, 1] + offset * np.cos(path[:, 2])
    return out


def _blend_offset_path(path, offset_a, offset_b, s_start, s_end):
    """Lateral offset ramping from offset_a to offset_b (cosine blend) over [s_start, s_end]."""
    chain = PolylineChain(path)
    s, _ = chain.project_many(path[:, :2])
    u = np.clip((s - s_start) / max(s_end - s_start, 1e-9), 0.0, 1.0)
    off = offset_a + (offset_b - offset_a) * 0.5 * (1 - np.cos(np.pi * u))
    out = path.copy()
    out[:, 0] = path[:, 0] - off * np.sin(path[:, 2])
    out[:, 1] = path[:, 1] + off * np.cos(path[:, 2])
    # recompute headings from the blended geometry
    d = np.gradient(out[:, :2], axis=0)
    out[:, 2] = np.arctan2(d[:, 1], d[:, 0])
    return out


def _chunk_polylines(path, kind, n_points, chunk_len=48.0):
    chain = PolylineChain(path)
    n_chunks = max(1, int(np.ceil(chain.length / chunk_len)))
    bounds = np.linspace(0.0, chain.length, n_chunks + 1)
    polys = []
    for i in range(n_chunks):
        lo = np.searchsorted(chain.cum_len, bounds[i], side="left")
        hi = np.searchsorted(chain.cum_len, bounds[i + 1], side="right")
        seg = path[max(0, lo - 1) : hi + 1]
        if seg.shape[0] < 2:
            continue
        polys.append(MapPolyline(kind, resample_polyline(seg, n_points)))
    return polys


def _transform(pose, pts):
    """Apply rigid transform (tx, ty, phi) to (x, y, heading) rows."""
    tx, ty, phi = pose
    c, s = np.cos(phi), np.sin(phi)
    out = np.asarray(pts, dtype=float).copy()
    x, y = out[..., 0].copy(), out[..., 1].copy()
    out[..., 0] = tx + c * x - s * y
    out[..., 1] = ty + s * x + c * y
    out[..., 2] = wrap_angle(out[..., 2] + phi)
    return out


@dataclass
class _AgentSpec:
    kind: str
    size: tuple[float, float]
    path: np.ndarray  # local-frame path waypoints
    start_s: float
    start_speed: float
    controller: Callable  # (t, state, chain, others) -> (accel, yaw_rate)


def _pure_pursuit(chain, state, omega_max):
    x, y, heading, v = state
    s, _ = chain.project(np.array([x, y]))
    lookahead = float(np.clip(1.5 + 0.8 * v, 2.5, 9.0))
    target = chain.pose_at(min(s + lookahead, chain.length))
    alpha = wrap_angle(np.arctan2(target[1] - y, target[0] - x) - heading)
    omega = 2.0 * v * np.sin(alpha) / lookahead
    return float(np.clip(omega, -omega_max, omega_max)), s


def _idm_accel(v, v_des, gap, dv):
    s_star = IDM_S0 + max(0.0, v * IDM_T + v * dv / (2.0 * np.sqrt(IDM_A * IDM_B)))
    gap = max(gap, 0.1)
    return IDM_A * (1.0 - (v / max(v_des, 0.1)) ** IDM_DELTA - (s_star / gap) ** 2)


def _speed_tracking(v, v_des, kp=1.5, a_min=-4.0, a_max=2.5):
    return float(np.clip(kp * (v_des - v), a_min, a_max))


def _cruise_controller(v_des_fn):
    def ctl(t, state, chain, others):
        omega, s = _pure_pursuit(chain, state, 1.0)
        return _speed_tracking(state[3], v_des_fn(t, s)), omega

    return ctl


def _idm_controller(v_des_fn, lead_index, half_lengths):
    def ctl(t, state, chain, others):
        omega, s = _pure_pursuit(chain, state, 1.0)
        lead_state = others[lead_index]
        s_lead, _ = chain.project(lead_state[:2])
        gap = s_lead - s - half_lengths
        a = _idm_accel(state[3], v_des_fn(t, s), gap, state[3] - lead_state[3])
        return float(np.clip(a, -6.0, 6.0)), omega

    return ctl


def _braking_lead_controller(v0, t_brake, decel, v_end):
    def ctl(t, state, chain, others):
        omega, _ = _pure_pursuit(chain, state, 1.0)
        if t >= t_brake and state[3] > v_end:
            return float(-decel), omega
        if t < t_brake:
            return _speed_tracking(state[3], v0), omega
        return _speed_tracking(state[3], v_end), omega

    return ctl


def _simulate(specs: list[_AgentSpec], n_steps: int, dt: float) -> np.ndarray:
    chains = [PolylineChain(sp.path) for sp in specs]
    states = np.zeros((len(specs), n_steps, 4))
    for i, sp in enumerate(specs):
        pose = chains[i].pose_at(sp.start_s)
        states[i, 0] = [pose[0], pose[1], pose[2], sp.start_speed]
    for t in range(1, n_steps):
        prev = states[:, t - 1]
        actions = np.zeros((len(specs), 1, 2))
        for i, sp in enumerate(specs):
            a, w = sp.controller(t, prev[i], chains[i], prev)
            actions[i, 0, 0] = np.clip(a, -6.0, 6.0)
            actions[i, 0, 1] = np.clip(w, -1.0, 1.0)
        states[:, t] = rollout_dynamics(prev, actions, dt)[:, 0]
    return states


def _build_template(template: str, rng: np.random.Generator, cfg: SynthConfig):
    """Local-frame geometry + agent specs for one template draw."""
    p = cfg.params
    specs: list[_AgentSpec] = []
    lanes: list[np.ndarray] = []
    edges: list[np.ndarray] = []

    if template in ("straight", "lead_slowdown"):
        length = 280.0
        lane0 = _straight((0.0, 0.0), 0.0, length)
        lane1 = _offset_path(lane0, LANE_WIDTH)
        lanes = [lane0, lane1]
        edges = [_offset_path(lane0, -LANE_WIDTH / 2 - 0.5), _offset_path(lane1, LANE_WIDTH / 2 + 0.5)]
        v_ego = rng.uniform(5.0, 10.0)
        s_ego = rng.uniform(20.0, 35.0)
        if template == "straight":
            gap = rng.uniform(22.0, 40.0)
            v_lead = v_ego * rng.uniform(0.8, 1.05)
            lead_kind, lead_size = ("cyclist", BIKE_SIZE) if rng.random() < 0.15 else ("vehicle", CAR_SIZE)
            specs.append(
                _AgentSpec("vehicle", EGO_SIZE, lane0, s_ego, v_ego,
                           _idm_controller(lambda t, s, v=v_ego: v, 1, (EGO_SIZE[0] + lead_size[0]) / 2))
            )
            specs.append(
                _AgentSpec(lead_kind, lead_size, lane0, s_ego + gap, v_lead,
                           _cruise_controller(lambda t, s, v=v_lead: v))
            )
            if rng.random() < 0.7:
                v_adj = rng.uniform(4.0, 9.0)
                specs.append(
                    _AgentSpec("vehicle", CAR_SIZE, lane1, s_ego + rng.uniform(-15.0, 25.0), v_adj,
                               _cruise_controller(lambda t, s, v=v_adj: v))
                )
            route_path = lane0
        else:
            gap = rng.uniform(24.0, 34.0)
            v_lead = rng.uniform(6.0, 9.0)
            t_brake = int(rng.integers(p.history_len, p.history_len + 5))
            decel = rng.uniform(1.2, 2.4)
            v_end = rng.uniform(0.5, 3.0)
            specs.append(
                _AgentSpec("vehicle", EGO_SIZE, lane0, s_ego, min(v_ego, v_lead),
                           _idm_controller(lambda t, s, v=v_ego: v, 1, (EGO_SIZE[0] + CAR_SIZE[0]) / 2))
            )
            specs.append(
                _AgentSpec("vehicle", CAR_SIZE, lane0, s_ego + gap, v_lead,
                           _braking_lead_controller(v_lead, t_brake, decel, v_end))
            )
            route_path = lane0

    elif template == "curved":
        radius = rng.uniform(40.0, 80.0)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        angle = sign * rng.uniform(0.7, 1.4)
        entry = _straight((0.0, 0.0), 0.0, 40.0)
        arc = _arc(entry[-1], radius, angle)
        exit_leg = _straight(arc[-1, :2], arc[-1, 2], 120.0)
        lane0 = _concat_paths(entry, arc, exit_leg)
        lane1 = _offset_path(lane0, LANE_WIDTH)
        lanes = [lane0, lane1]
        edges = [_offset_path(lane0, -LANE_WIDTH / 2 - 0.5), _offset_path(lane1, LANE_WIDTH / 2 + 0.5)]
        v_max = np.sqrt(2.0 * radius)
        v_ego = rng.uniform(4.0, min(8.5, v_max))
        s_ego = rng.uniform(10.0, 25.0)
        specs.append(
            _AgentSpec("vehicle", EGO_SIZE, lane0, s_ego, v_ego, _cruise_controller(lambda t, s, v=v_ego: v))
        )
        if rng.random() < 0.6:
            v_lead = v_ego * rng.uniform(0.85, 1.1)
            specs.append(
                _AgentSpec("vehicle", CAR_SIZE, lane0, s_ego + rng.uniform(25.0, 45.0), v_lead,
                           _cruise_controller(lambda t, s, v=v_lead: v))
            )
        route_path = lane0

    elif template == "unprotected_turn":
        approach = rng.uniform(28.0, 38.0)
        radius = rng.uniform(9.0, 14.0)
        entry = _straight((0.0, 0.0), 0.0, approach)
        arc = _arc(entry[-1], radius, np.pi / 2)
        exit_leg = _straight(arc[-1, :2], arc[-1, 2], 110.0)
        ego_path = _concat_paths(entry, arc, exit_leg)
        # the turn crosses the oncoming lane of the ego's original road
        oncoming = _straight((approach + radius + 90.0, LANE_WIDTH), np.pi, 220.0)
        ahead_lane = _straight((0.0, 0.0), 0.0, approach + radius + 70.0)
        lanes = [ego_path, oncoming, ahead_lane]
        edges = []
        v_turn = rng.uniform(2.5, 4.0)
        v_in = rng.uniform(5.5, 8.0)
        v_out = rng.uniform(5.0, 7.5)
        arc_s0, arc_s1 = approach, approach + radius * np.pi / 2

        def ego_speed(t, s):
            if s < arc_s0 - 12.0:
                return v_in
            if s < arc_s1:
                return v_turn
            return v_out

        specs.append(
            _AgentSpec("vehicle", EGO_SIZE, ego_path, rng.uniform(2.0, 8.0), v_in,
                       _cruise_controller(ego_speed))
        )
        v_cross = rng.uniform(4.0, 7.0)
        s_cross = rng.uniform(5.0, 70.0)
        specs.append(
            _AgentSpec("vehicle", CAR_SIZE, oncoming, s_cross, v_cross,
                       _cruise_controller(lambda t, s, v=v_cross: v))
        )
        route_path = ego_path

    elif template == "lane_change":
        length = 280.0
        lane0 = _straight((0.0, 0.0), 0.0, length)
        lane1 = _offset_path(lane0, LANE_WIDTH)
        lanes = [lane0, lane1]
        edges = [_offset_path(lane0, -LANE_WIDTH / 2 - 0.5), _offset_path(lane1, LANE_WIDTH / 2 + 0.5)]
        s_ego = rng.uniform(15.0, 25.0)
        v_ego = rng.uniform(6.0, 9.5)
        lc_start = s_ego + rng.uniform(10.0, 18.0)
        lc_len = rng.uniform(24.0, 36.0)
        ego_path = _blend_offset_path(lane0, 0.0, LANE_WIDTH, lc_start, lc_start + lc_len)
        v_slow = rng.uniform(1.5, 3.5)
        s_slow = lc_start + lc_len + rng.uniform(12.0, 24.0)
        specs.append(
            _AgentSpec("vehicle", EGO_SIZE, ego_path, s_ego, v_ego, _cruise_controller(lambda t, s, v=v_ego: v))
        )
        specs.append(
            _AgentSpec("vehicle", CAR_SIZE, lane0, s_slow, v_slow, _cruise_controller(lambda t, s, v=v_slow: v))
        )
        if rng.random() < 0.5:
            v_b = rng.uniform(5.0, 8.0)
            specs.append(
                _AgentSpec("vehicle", CAR_SIZE, lane1, max(2.0, s_ego - rng.uniform(12.0, 22.0)), v_b,
                           _cruise_controller(lambda t, s, v=v_b: v))
            )
        route_path = ego_path

    else:
        raise ConfigError(f"unknown scenario template {template!r}")

    return specs, lanes, edges, route_path


def _make_log(template: str, idx: int, seed: int, cfg: SynthConfig, attempt: int) -> ScenarioLog:
    rng = make_rng(seed, idx, attempt)
    p = cfg.params
    specs, lanes, edges, route_path = _build_template(template, rng, cfg)

    world_pose = (rng.uniform(-150.0, 150.0), rng.uniform(-150.0, 150.0), rng.uniform(-np.pi, np.pi))
    for sp in specs:
        sp.path = _transform(world_pose, sp.path)
    lanes = [_transform(world_pose, ln) for ln in lanes]
    edges = [_transform(world_pose, e) for e in edges]
    route_path = _transform(world_pose, route_path)

    n_steps = p.history_len + cfg.future_len
    states = _simulate(specs, n_steps, p.dt)

    tracks = [
        AgentTrack(agent_id=i, kind=sp.kind, length=sp.size[0], width=sp.size[1], states=states[i])
        for i, sp in enumerate(specs)
    ]
    map_polys = []
    for ln in lanes:
        map_polys.extend(_chunk_polylines(ln, "lane_center", p.waypoints_per_polyline))
    for e in edges:
        map_polys.extend(_chunk_polylines(e, "road_edge", p.waypoints_per_polyline))

    ego_chain = PolylineChain(route_path)
    s_ego0, _ = ego_chain.project(states[0, 0, :2])
    route_tail = route_path[np.searchsorted(ego_chain.cum_len, max(0.0, s_ego0 - 8.0)) :]
    route_polys = _chunk_polylines(route_tail, "route", p.waypoints_per_polyline)

    log = ScenarioLog(
        scenario_id=f"{template}-{idx:05d}",
        template=template,
        dt=p.dt,
        history_len=p.history_len,
        ego_id=0,
        tracks=tracks,
        map_polylines=map_polys,
        route_polylines=route_polys,
        target_distance=1.0,  # placeholder until measured below
    )
    # target distance = the logged ego's own route advance from the current timestep
    scene = log.scene_at(p.history_len - 1, p)
    ego_future = states[0, p.history_len :, :]
    adv = progress_per_step(scene, ego_future)
    log.target_distance = max(float(adv[-1]), 2.0)
    return log


def _log_is_clean(log: ScenarioLog, cfg: SynthConfig) -> bool:
    p = cfg.params
    scene = log.scene_at(p.history_len - 1, p)
    by_id = {a.agent_id: a for a in log.tracks}
    full = np.stack([by_id[a.agent_id].states for a in scene.agents])
    if check_collision(scene, full).any():
        return False
    flags, _ = check_offroad(scene, by_id[log.ego_id].states, p)
    return not flags.any()


def synth_scenarios(cfg: SynthConfig, seed: int) -> list[ScenarioLog]:
    """Deterministic scenario suite for (cfg, seed); raises if a template cannot
    produce a collision-free, on-road log within the retry budget."""
    logs = []
    for idx in range(cfg.n_scenarios):
        template = cfg.templates[idx % len(cfg.templates)]
        for attempt in range(24):
            log = _make_log(template, idx, seed, cfg, attempt)
            if _log_is_clean(log, cfg):
                logs.append(log)
                break
        else:
            raise ValidationError(f"template {template}: no clean log after 24 attempts (idx={idx})")
    return logs
