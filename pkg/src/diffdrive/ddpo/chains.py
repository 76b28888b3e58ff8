"""Chain sampling for fine-tuning: recorded reverse trajectories plus cached
old-policy log-probs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import make_rng
from ..diffusion.model import DenoiserModel
from ..diffusion.sample import ChainRecord, EncodedScene, sample_scene
from ..diffusion.schedule import NoiseSchedule
from .losses import transition_logprob


@dataclass
class ChainSample:
    """One recorded denoising trajectory and everything the update needs."""

    steps: list[ChainRecord]  # k = K..1 in sampling order
    logp_old: dict[int, float]  # cached ego transition log-probs for k = K..2
    raw_actions: np.ndarray  # [N, T_f, 2] terminal denoised actions (pre-clamp)
    actions: np.ndarray  # clamped
    states: np.ndarray  # [N, T_f, 4] rollout of the clamped actions
    reward: float = field(default=np.nan)


def sample_chains(model: DenoiserModel, schedule: NoiseSchedule, enc: EncodedScene,
                  m: int, seed: int, step_index: int) -> list[ChainSample]:
    """m recorded chains for one scene under the current parameters."""
    rngs = [make_rng(seed, 600, step_index, i) for i in range(m)]
    results = sample_scene(model, enc.scene, schedule, m, rngs, record_chains=True, enc=enc)
    chains = []
    for res in results:
        logp_old = {
            rec.k: transition_logprob(rec.mu_ego, rec.sigma, rec.a_out_ego)
            for rec in res.chain
            if rec.sigma > 0.0
        }
        chains.append(
            ChainSample(
                steps=res.chain,
                logp_old=logp_old,
                raw_actions=res.raw_actions,
                actions=res.actions,
                states=res.states,
            )
        )
    return chains
