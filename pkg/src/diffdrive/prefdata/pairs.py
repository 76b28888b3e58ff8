"""Pairwise sampling of candidates with rule filters and judge delegation.

Precedence: a pair below the discrepancy threshold is dropped; if both members
fail a world predicate the pair is dropped; if exactly one fails, the rule
filter decides without consulting the judge; otherwise the judge decides,
drops, or leaves the pair pending.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..rng import make_rng
from ..world.scene import Scene
from .candidates import CandidateScene


@dataclass
class PreferencePair:
    pair_id: str
    scenario_id: str
    accepted_future: np.ndarray
    rejected_future: np.ndarray
    accepted_anchor: int
    rejected_anchor: int
    judge: str  # rule_filter | oracle | vlm | human
    rationale: str
    timestamp: float

    def __post_init__(self):
        if self.accepted_future.shape != self.rejected_future.shape:
            raise ValidationError(f"pair {self.pair_id}: future shapes differ")
        if np.array_equal(self.accepted_future, self.rejected_future):
            raise ValidationError(f"pair {self.pair_id}: accepted equals rejected")


@dataclass
class PendingPair:
    pair_id: str
    scenario_id: str
    future_a: np.ndarray
    future_b: np.ndarray
    anchor_a: int
    anchor_b: int
    detail: str = ""
    geometry: dict = field(default_factory=dict)


def mean_ego_displacement(a: CandidateScene, b: CandidateScene) -> float:
    return float(np.linalg.norm(a.future[0, :, :2] - b.future[0, :, :2], axis=1).mean())


def make_pairs(
    scene: Scene,
    candidates: list[CandidateScene],
    judge,
    seed: int,
    scenario_index: int = 0,
    max_pairs: int = 20,
    discrepancy_threshold: float = 1.0,
    timestamp_fn=None,
) -> tuple[list[PreferencePair], list[PendingPair]]:
    """Sample candidate index pairs and resolve each into a preference or a
    pending entry. Deterministic when the judge is deterministic."""
    if len(candidates) < 2:
        raise ValidationError("pairing needs at least 2 candidates")
    rng = make_rng(seed, 500, scenario_index)
    combos = [(i, j) for i in range(len(candidates)) for j in range(i + 1, len(candidates))]
    picks = rng.permutation(len(combos))[:max_pairs]
    clock = timestamp_fn or (lambda i: float(i))

    pairs: list[PreferencePair] = []
    pending: list[PendingPair] = []
    for n, ci in enumerate(picks):
        i, j = combos[ci]
        a, b = candidates[i], candidates[j]
        pair_id = f"{scene.scenario_id}-p{n:04d}"
        if mean_ego_displacement(a, b) < discrepancy_threshold:
            continue
        if a.failed() and b.failed():
            continue
        if a.failed() != b.failed():
            good, bad = (b, a) if a.failed() else (a, b)
            why = "collision" if (a if a.failed() else b).ego_collision else "off-road"
            pairs.append(
                PreferencePair(
                    pair_id=pair_id,
                    scenario_id=scene.scenario_id,
                    accepted_future=good.future,
                    rejected_future=bad.future,
                    accepted_anchor=good.anchor_index,
                    rejected_anchor=bad.anchor_index,
                    judge="rule_filter",
                    rationale=f"rejected future fails {why} check",
                    timestamp=clock(n),
                )
            )
            continue
        result = judge.decide(scene, a.future, b.future)
        if result.kind == "drop":
            continue
        if result.kind == "pending":
            pending.append(
                PendingPair(
                    pair_id=pair_id,
                    scenario_id=scene.scenario_id,
                    future_a=a.future,
                    future_b=b.future,
                    anchor_a=a.anchor_index,
                    anchor_b=b.anchor_index,
                    detail=result.detail,
                )
            )
            continue
        win_a = result.decision.choice == "A"
        good, bad = (a, b) if win_a else (b, a)
        pairs.append(
            PreferencePair(
                pair_id=pair_id,
                scenario_id=scene.scenario_id,
                accepted_future=good.future,
                rejected_future=bad.future,
                accepted_anchor=good.anchor_index,
                rejected_anchor=bad.anchor_index,
                judge=judge.name,
                rationale=result.decision.rationale,
                timestamp=clock(n),
            )
        )
    return pairs, pending
