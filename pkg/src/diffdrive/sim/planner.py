"""Planners for the closed-loop harness.

A planner maps (scene, log, t_index) to an ego action plan over the model
horizon. The diffusion planner samples one or many joint futures and, in
multi mode, picks by evaluator score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..rng import make_rng
from ..world.dynamics import fit_actions
from ..world.scene import ScenarioLog, Scene
from ..reward.model import EvaluatorModel, score_scenes
from ..diffusion.model import DenoiserModel
from ..diffusion.sample import sample_scene
from ..diffusion.schedule import NoiseSchedule


@dataclass
class PlanResult:
    ego_actions: np.ndarray  # [T_f, 2]
    futures: list[np.ndarray]  # sampled joint futures (scene agent order)
    chosen: int
    scores: list[float] | None


class DiffusionPlanner:
    def __init__(self, model: DenoiserModel, schedule: NoiseSchedule,
                 evaluator: EvaluatorModel | None = None, mode: str = "single",
                 sample_count: int = 16):
        if mode not in ("single", "multi"):
            raise ConfigError(f"planner mode must be single or multi, got {mode!r}")
        if mode == "multi" and evaluator is None:
            raise ConfigError("multi-sample planning needs an evaluator for selection")
        self.model = model
        self.schedule = schedule
        self.evaluator = evaluator
        self.mode = mode
        self.sample_count = sample_count

    def plan(self, scene: Scene, log: ScenarioLog, t_index: int, seed: int,
             episode_index: int, replan_index: int) -> PlanResult:
        count = 1 if self.mode == "single" else self.sample_count
        rngs = [make_rng(seed, 700, episode_index, replan_index, i) for i in range(count)]
        results = sample_scene(self.model, scene, self.schedule, count, rngs)
        n = len(scene.agents)
        futures = [r.states[:n] for r in results]
        if count == 1:
            return PlanResult(ego_actions=results[0].actions[0], futures=futures,
                              chosen=0, scores=None)
        scored = score_scenes(self.evaluator, scene, futures)
        scores = [s.score for s in scored]
        chosen = int(np.argmax(scores))
        return PlanResult(ego_actions=results[chosen].actions[0], futures=futures,
                          chosen=chosen, scores=scores)


class LogReplayPlanner:
    """Replays the logged ego trajectory (identity planner for harness checks)."""

    def plan(self, scene: Scene, log: ScenarioLog, t_index: int, seed: int,
             episode_index: int, replan_index: int) -> PlanResult:
        ego = next(a for a in log.tracks if a.agent_id == log.ego_id)
        horizon = scene.future_len
        idx = np.minimum(np.arange(t_index + 1, t_index + 1 + horizon), log.n_steps - 1)
        target = ego.states[idx]
        start = scene.ego.states[-1][None]
        actions = fit_actions(start, target[None], log.dt)[0]
        return PlanResult(ego_actions=actions, futures=[], chosen=0, scores=None)


class ZeroActionPlanner:
    """Always outputs zero acceleration and yaw rate."""

    def plan(self, scene: Scene, log: ScenarioLog, t_index: int, seed: int,
             episode_index: int, replan_index: int) -> PlanResult:
        return PlanResult(ego_actions=np.zeros((scene.future_len, 2)), futures=[],
                          chosen=0, scores=None)
