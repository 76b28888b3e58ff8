"""Guided candidate generation: one diverse future per anchor goal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import make_rng
from ..world.predicates import check_collision, check_offroad
from ..world.scene import Scene
from ..diffusion.features import ego_frame
from ..diffusion.model import DenoiserModel
from ..diffusion.sample import encode_scene, sample_scene
from ..diffusion.schedule import NoiseSchedule
from .anchors import AnchorSet


@dataclass
class CandidateScene:
    future: np.ndarray  # [N_cap, T_f, 4]
    actions: np.ndarray  # [N_cap, T_f, 2]
    anchor_index: int
    ego_collision: bool
    ego_offroad: bool

    def failed(self) -> bool:
        return self.ego_collision or self.ego_offroad


def anchor_goals_global(scene: Scene, anchors: AnchorSet) -> np.ndarray:
    """Anchor goals mapped from the ego frame into the scene's global frame."""
    tx, ty, phi = ego_frame(scene)
    c, s = np.cos(phi), np.sin(phi)
    x, y = anchors.anchors[:, 0], anchors.anchors[:, 1]
    return np.stack([tx + c * x - s * y, ty + s * x + c * y], axis=1)


def generate_candidates(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    scene: Scene,
    anchors: AnchorSet,
    strength: float,
    seed: int,
    scenario_index: int = 0,
) -> list[CandidateScene]:
    """One guided sample per anchor, with ego failure flags from the world
    predicates. Deterministic for (model, anchors, seed, scenario_index)."""
    goals = anchor_goals_global(scene, anchors)
    count = goals.shape[0]
    rngs = [make_rng(seed, 400, scenario_index, i) for i in range(count)]
    enc = encode_scene(model, scene)
    results = sample_scene(
        model, scene, schedule, count, rngs, goals=goals, guidance_strength=strength, enc=enc
    )
    n = len(scene.agents)
    out = []
    for i, res in enumerate(results):
        fut = res.states[:n]
        report = check_collision(scene, fut)
        offroad_flags, _ = check_offroad(scene, fut[0])
        out.append(
            CandidateScene(
                future=fut,
                actions=res.actions[:n],
                anchor_index=i,
                ego_collision=report.any(),
                ego_offroad=bool(offroad_flags.any()),
            )
        )
    return out
