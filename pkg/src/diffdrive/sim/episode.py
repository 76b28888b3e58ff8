"""Closed-loop episode: replan at a fixed period, execute the ego plan
open-loop, replay background agents from the log (non-reactive), and compute
metrics on the realized ego trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..world.dynamics import rollout_dynamics
from ..world.geometry import PolylineChain, min_distance_to_polylines, rect_corners, rects_overlap
from ..world.predicates import chain_from_polylines
from ..world.scene import AgentTrack, ScenarioLog, WorldParams


@dataclass
class EpisodeConfig:
    duration: float = 15.0
    replan_period: float = 1.0
    planner_mode: str = "single"
    sample_count: int = 16
    seed: int = 0

    def steps(self, dt: float) -> int:
        n = self.duration / dt
        if abs(n - round(n)) > 1e-9:
            raise ValidationError(f"duration {self.duration} is not a multiple of dt {dt}")
        return int(round(n))

    def replan_every(self, dt: float) -> int:
        n = self.replan_period / dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValidationError(
                f"replan period {self.replan_period} must be an integer multiple of dt {dt}"
            )
        return int(round(n))


@dataclass
class EpisodeMetrics:
    collided: bool
    offroad: bool
    progress: float
    score: float
    failed: bool = False


@dataclass
class EpisodeTrace:
    scenario_id: str
    template: str
    dt: float
    ego_states: np.ndarray  # [steps + 1, 4] realized, including the start state
    bg_states: np.ndarray  # [n_bg, steps + 1, 4] replayed from the log
    bg_meta: list[tuple[int, str, float, float]]  # agent_id, kind, length, width
    plans: list[dict] = field(default_factory=list)  # per replan: t, futures, chosen
    failed: bool = False


def _ego_history_track(log: ScenarioLog, realized: list[np.ndarray], sim_step: int,
                       params: WorldParams) -> AgentTrack:
    """Ego history window ending at the current sim step: realized states where
    available, logged history before episode start."""
    t0 = log.history_len - 1
    ego = next(a for a in log.tracks if a.agent_id == log.ego_id)
    rows = []
    for t in range(t0 + sim_step - params.history_len + 1, t0 + sim_step + 1):
        if t < t0:
            rows.append(ego.states[max(t, 0)])
        else:
            rows.append(realized[t - t0])
    return AgentTrack(ego.agent_id, ego.kind, ego.length, ego.width, np.stack(rows))


def run_episode(planner, log: ScenarioLog, config: EpisodeConfig,
                params: WorldParams) -> tuple[EpisodeMetrics, EpisodeTrace]:
    dt = log.dt
    n_steps = config.steps(dt)
    replan_every = config.replan_every(dt)
    t0 = log.history_len - 1

    ego_log = next(a for a in log.tracks if a.agent_id == log.ego_id)
    bg = [a for a in log.tracks if a.agent_id != log.ego_id]
    bg_idx = np.minimum(np.arange(t0, t0 + n_steps + 1), log.n_steps - 1)
    bg_states = np.stack([a.states[bg_idx] for a in bg]) if bg else np.zeros((0, n_steps + 1, 4))

    realized = [ego_log.states[t0].copy()]
    trace = EpisodeTrace(
        scenario_id=log.scenario_id,
        template=log.template,
        dt=dt,
        ego_states=np.zeros((n_steps + 1, 4)),
        bg_states=bg_states,
        bg_meta=[(a.agent_id, a.kind, a.length, a.width) for a in bg],
    )
    failed = False
    plan_actions = None
    cursor = 0
    episode_index = _stable_episode_index(log.scenario_id)
    for step in range(n_steps):
        if step % replan_every == 0:
            ego_track = _ego_history_track(log, realized, step, params)
            try:
                scene = log.scene_at(t0 + step, params, ego_track=ego_track)
                plan = planner.plan(scene, log, t0 + step, config.seed,
                                    episode_index, step // replan_every)
            except Exception:
                failed = True
                break
            plan_actions = plan.ego_actions
            cursor = 0
            trace.plans.append({
                "t": t0 + step,
                "futures": [f.copy() for f in plan.futures],
                "chosen": plan.chosen,
                "scores": plan.scores,
            })
        action = plan_actions[min(cursor, plan_actions.shape[0] - 1)]
        cursor += 1
        nxt = rollout_dynamics(realized[-1][None], action[None, None, :], dt)[0, 0]
        realized.append(nxt)

    while len(realized) < n_steps + 1:
        realized.append(realized[-1].copy())
    trace.ego_states = np.stack(realized)
    trace.failed = failed

    metrics = compute_metrics(log, trace, params, failed)
    return metrics, trace


def compute_metrics(log: ScenarioLog, trace: EpisodeTrace, params: WorldParams,
                    failed: bool) -> EpisodeMetrics:
    ego_meta = next(a for a in log.tracks if a.agent_id == log.ego_id)
    ego = trace.ego_states
    collided = False
    for t in range(ego.shape[0]):
        ego_quad = rect_corners(ego[t, 0], ego[t, 1], ego[t, 2], ego_meta.length, ego_meta.width)
        for i, (_, _, length, width) in enumerate(trace.bg_meta):
            s = trace.bg_states[i, t]
            if rects_overlap(ego_quad, rect_corners(s[0], s[1], s[2], length, width)):
                collided = True
                break
        if collided:
            break
    lanes = [PolylineChain(p.waypoints) for p in log.map_polylines if p.kind == "lane_center"]
    dist = min_distance_to_polylines(ego[:, :2], lanes)
    offroad = bool((dist > params.lane_half_width + ego_meta.width / 2.0 + 1e-12).any())

    chain = chain_from_polylines(log.route_polylines)
    s, _ = chain.project_many(np.stack([ego[0, :2], ego[-1, :2]]))
    progress = max(0.0, float(s[1] - s[0])) / log.target_distance

    if failed:
        return EpisodeMetrics(collided=collided, offroad=offroad, progress=progress,
                              score=0.0, failed=True)
    score = float((not collided) * (not offroad) * min(progress, 1.0))
    return EpisodeMetrics(collided=collided, offroad=offroad, progress=progress, score=score)


def _stable_episode_index(scenario_id: str) -> int:
    import zlib

    return zlib.crc32(scenario_id.encode()) & 0x7FFFFFFF
