"""Reverse-diffusion sampling: plain, goal-guided, and chain-recorded.

Each sample owns an independent counter-based random stream, so a batch of
chains is bitwise identical to the same chains drawn one at a time with the
same sub-seeds. The final reverse step (k = 1) has zero posterior variance
and draws no noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..world.dynamics import rollout_backward, rollout_dynamics
from ..world.scene import Scene
from .features import SceneFeatures, tensorize_scene
from .model import DenoiserModel, FeatureBatch
from .schedule import NoiseSchedule


@dataclass
class ChainRecord:
    """One reverse transition restricted to what fine-tuning needs."""

    k: int
    a_in: np.ndarray  # [N, T_f, 2] the full noised actions fed to the model
    mu_ego: np.ndarray  # [T_f, 2] transition mean, ego rows, under sampling params
    sigma: float
    a_out_ego: np.ndarray  # [T_f, 2] sampled next actions, ego rows


@dataclass
class SampleResult:
    actions: np.ndarray  # [N, T_f, 2] final actions, clamped to bounds
    states: np.ndarray  # [N, T_f, 4] dynamics rollout of the clamped actions
    raw_actions: np.ndarray  # [N, T_f, 2] pre-clamp denoised actions
    chain: list[ChainRecord] | None


@dataclass
class EncodedScene:
    """Scene encoding reused across reverse steps (and across chains)."""

    scene: Scene
    feats: SceneFeatures
    batch: FeatureBatch
    C: np.ndarray
    route_tok: np.ndarray


def encode_scene(model: DenoiserModel, scene: Scene) -> EncodedScene:
    feats = tensorize_scene(scene, model.world)
    batch = FeatureBatch.stack([feats])
    C, route_tok, _ = model.encode(batch)
    return EncodedScene(scene=scene, feats=feats, batch=batch, C=C, route_tok=route_tok)


def tile_encoding(enc: EncodedScene, count: int) -> tuple[FeatureBatch, np.ndarray, np.ndarray]:
    def rep(a):
        return np.repeat(a, count, axis=0)

    batch = FeatureBatch(**{n: rep(getattr(enc.batch, n)) for n in FeatureBatch.__dataclass_fields__})
    return batch, rep(enc.C), rep(enc.route_tok)


def clamp_actions(actions: np.ndarray, world) -> np.ndarray:
    out = actions.copy()
    out[..., 0] = np.clip(out[..., 0], -world.accel_limit, world.accel_limit)
    out[..., 1] = np.clip(out[..., 1], -world.yaw_rate_limit, world.yaw_rate_limit)
    return out


def _rollout_batch(start: np.ndarray, actions: np.ndarray, dt: float) -> np.ndarray:
    """Rollout for [B, N, T, 2] actions from [B, N, 4] starts."""
    B, N, T, _ = actions.shape
    flat = rollout_dynamics(start.reshape(B * N, 4), actions.reshape(B * N, T, 2), dt)
    return flat.reshape(B, N, T, 4)


def goal_guidance_grad(enc: EncodedScene, a0_hat: np.ndarray, goals: np.ndarray, dt: float) -> np.ndarray:
    """d/d(ego actions) of || final ego position of f(a0_hat) - goal ||^2.

    a0_hat [B, N, T_f, 2], goals [B, 2] in the global frame; returns [B, T_f, 2].
    """
    B, _, T, _ = a0_hat.shape
    ego_start = np.repeat(enc.feats.start_states[:1], B, axis=0)
    ego_actions = a0_hat[:, 0]
    states = rollout_dynamics(ego_start, ego_actions, dt)
    gstates = np.zeros_like(states)
    gstates[:, -1, 0] = 2.0 * (states[:, -1, 0] - goals[:, 0])
    gstates[:, -1, 1] = 2.0 * (states[:, -1, 1] - goals[:, 1])
    return rollout_backward(ego_start, ego_actions, states, gstates, dt)


def denoise_step(
    model: DenoiserModel,
    enc: EncodedScene,
    schedule: NoiseSchedule,
    a_k: np.ndarray,
    k: int,
    rngs: list[np.random.Generator],
    goals: np.ndarray | None = None,
    guidance_strength: float = 0.0,
    batch_ctx=None,
):
    """One reverse transition for a batch of chains of the same scene.

    a_k [B, N, T_f, 2]; returns (a_prev, mu, sigma). Per-chain noise comes
    from rngs[i], drawn only when sigma > 0.
    """
    if not (1 <= k <= schedule.K):
        raise ValidationError(f"denoise level {k} outside 1..{schedule.K}")
    B = a_k.shape[0]
    batch, C, route = batch_ctx if batch_ctx is not None else tile_encoding(enc, B)
    a0_hat, _ = model.denoise(C, route, batch, a_k, np.full(B, k, dtype=int))
    c_clean, c_noised, sigma = schedule.posterior_coeffs(k)
    mu = c_clean * a0_hat + c_noised * a_k
    if goals is not None and guidance_strength != 0.0:
        grad = goal_guidance_grad(enc, a0_hat, goals, model.world.dt)
        mu[:, 0] = mu[:, 0] - guidance_strength * grad
    if sigma > 0.0:
        noise = np.stack([rngs[i].standard_normal(a_k.shape[1:]) for i in range(B)])
        a_prev = mu + sigma * noise
    else:
        a_prev = mu.copy()
    return a_prev, mu, sigma


def sample_scene(
    model: DenoiserModel,
    scene: Scene,
    schedule: NoiseSchedule,
    count: int,
    rngs: list[np.random.Generator],
    record_chains: bool = False,
    goals: np.ndarray | None = None,
    guidance_strength: float = 0.0,
    enc: EncodedScene | None = None,
) -> list[SampleResult]:
    """Draw `count` joint futures; optionally record every reverse transition."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    if len(rngs) != count:
        raise ValidationError(f"need one rng per sample: {len(rngs)} != {count}")
    enc = enc or encode_scene(model, scene)
    batch_ctx = tile_encoding(enc, count)
    N, T = model.world.agent_cap, model.world.future_len
    a = np.stack([rngs[i].standard_normal((N, T, 2)) for i in range(count)])
    chains: list[list[ChainRecord]] = [[] for _ in range(count)]
    for k in range(schedule.K, 0, -1):
        a_prev, mu, sigma = denoise_step(
            model, enc, schedule, a, k, rngs,
            goals=goals, guidance_strength=guidance_strength, batch_ctx=batch_ctx,
        )
        if record_chains:
            for i in range(count):
                chains[i].append(
                    ChainRecord(k=k, a_in=a[i].copy(), mu_ego=mu[i, 0].copy(),
                                sigma=sigma, a_out_ego=a_prev[i, 0].copy())
                )
        a = a_prev
    clamped = clamp_actions(a, model.world)
    states = _rollout_batch(np.repeat(enc.feats.start_states[None], count, axis=0), clamped,
                            model.world.dt)
    return [
        SampleResult(actions=clamped[i], states=states[i], raw_actions=a[i],
                     chain=chains[i] if record_chains else None)
        for i in range(count)
    ]


def guided_sample(
    model: DenoiserModel,
    scene: Scene,
    schedule: NoiseSchedule,
    goal: np.ndarray,
    strength: float,
    rng: np.random.Generator,
    enc: EncodedScene | None = None,
) -> SampleResult:
    """Single goal-guided sample; goal is (x, y) in the global frame."""
    goal = np.asarray(goal, dtype=float)
    if not np.isfinite(goal).all():
        raise ValidationError("guidance goal must be finite")
    return sample_scene(
        model, scene, schedule, 1, [rng],
        goals=goal[None], guidance_strength=strength, enc=enc,
    )[0]
