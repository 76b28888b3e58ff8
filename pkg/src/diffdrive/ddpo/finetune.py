"""DDPO fine-tuning loop: sample chains, score terminal scenes, normalize
rewards, and take clipped-ratio policy steps with a ground-truth regression
regularizer. Only 'denoiser/' parameters update; the encoder stays frozen.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..nn.layers import smooth_l1, smooth_l1_grad
from ..nn.optim import AdamW
from ..nn.params import zero_grads_like
from ..rng import make_rng
from ..world.dynamics import rollout_backward, rollout_dynamics
from ..world.geometry import wrap_angle
from ..reward.model import EvaluatorModel, score_scenes
from ..diffusion.model import DenoiserModel
from ..diffusion.sample import EncodedScene, encode_scene, tile_encoding
from ..diffusion.schedule import NoiseSchedule
from ..diffusion.train import TrainExample
from .chains import ChainSample, sample_chains
from .losses import PolicyStepDiag, normalize_rewards, policy_terms, transition_logprob_grad_mu


@dataclass
class FinetuneConfig:
    reg_weight: float = 10.0  # regression regularizer strength
    clip: float = 0.01
    samples: int = 32  # chains per fine-tune step
    lr: float = 1e-5
    steps: int = 1000
    iters: int = 5  # update iterations per step
    weight_decay: float = 0.0
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.clip <= 0:
            raise ValidationError("clip must be positive")
        if self.samples < 2:
            raise ValidationError("reward normalization needs samples >= 2")


def chain_loss_and_grads(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    enc: EncodedScene,
    example: TrainExample,
    chains: list[ChainSample],
    rewards: np.ndarray,
    cfg: FinetuneConfig,
):
    """Mean over chains of (clipped policy terms over k = K..2) plus
    reg_weight times the per-step regression of f(a0_hat) onto the logged
    ground truth (mean-per-element Smooth L1, summed over k = K..1).

    Returns (objective, grads over denoiser params, diagnostics dict).
    """
    m = len(chains)
    dt = model.world.dt
    batch_ctx = tile_encoding(enc, m)
    batch, C, route = batch_ctx
    valid = example.agent_valid
    w = valid[None, :, None, None].astype(float)
    n_valid = float(valid.sum()) * example.gt_states.shape[1] * 4
    gt = np.repeat(example.gt_states[None], m, axis=0)
    start = batch.start_states.reshape(m * valid.size, 4)

    grads = zero_grads_like(model.store)
    total_policy = 0.0
    total_reg = 0.0
    ratios = []
    diag_all = PolicyStepDiag()
    for k in range(schedule.K, 0, -1):
        a_k = np.stack([c.steps[schedule.K - k].a_in for c in chains])
        a0_hat, cache = model.denoise(C, route, batch, a_k, np.full(m, k, dtype=int))
        da0 = np.zeros_like(a0_hat)

        # regression toward the logged future, all valid agents
        N, T = a0_hat.shape[1], a0_hat.shape[2]
        states = rollout_dynamics(start, a0_hat.reshape(m * N, T, 2), dt).reshape(m, N, T, 4)
        res = states - gt
        res[..., 2] = wrap_angle(res[..., 2])
        total_reg += float((smooth_l1(res) * w).sum() / (n_valid * m))
        dres = cfg.reg_weight * smooth_l1_grad(res) * w / (n_valid * m)
        da0 += rollout_backward(start, a0_hat.reshape(m * N, T, 2),
                                states.reshape(m * N, T, 4),
                                dres.reshape(m * N, T, 4), dt).reshape(m, N, T, 2)

        if k >= 2:
            c_clean, c_noised, sigma = schedule.posterior_coeffs(k)
            mu = c_clean * a0_hat[:, 0] + c_noised * a_k[:, 0]
            a_out = np.stack([c.steps[schedule.K - k].a_out_ego for c in chains])
            z = (a_out - mu) / sigma
            logp_new = (-0.5 * np.log(2 * np.pi) - np.log(sigma) - 0.5 * z * z).sum(axis=(1, 2))
            logp_old = np.array([c.logp_old[k] for c in chains])
            terms, dlogp, rho, diag = policy_terms(rewards, logp_new, logp_old, cfg.clip)
            total_policy += float(terms.mean())
            ratios.append(rho)
            diag_all.clipped += diag.clipped
            diag_all.clamped_log_ratio += diag.clamped_log_ratio
            diag_all.skipped_nonfinite += diag.skipped_nonfinite
            dmu = (dlogp[:, None, None] / m) * transition_logprob_grad_mu(mu, sigma, a_out)
            da0[:, 0] += c_clean * dmu

        model.denoise_backward(cache, da0, grads)

    objective = total_policy + cfg.reg_weight * total_reg
    ratios = np.concatenate(ratios) if ratios else np.array([1.0])
    diagnostics = {
        "policy_loss": total_policy,
        "regression_loss": total_reg,
        "mean_ratio": float(ratios.mean()),
        "clip_fraction": diag_all.clipped / max(1, ratios.size),
        "clamped_log_ratios": diag_all.clamped_log_ratio,
        "skipped_nonfinite": diag_all.skipped_nonfinite,
    }
    return objective, grads, diagnostics


def finetune(
    model: DenoiserModel,
    reward_model: EvaluatorModel,
    schedule: NoiseSchedule,
    examples: list[tuple],
    cfg: FinetuneConfig,
    seed: int,
    log_path: Path | None = None,
    checkpoint_dir: Path | None = None,
    save_fn=None,
) -> list[dict]:
    """Run cfg.steps DDPO steps over (scene, TrainExample) pools.

    examples: list of (Scene, TrainExample) built from logged scenarios; each
    step draws one scene, samples cfg.samples chains from it, scores their
    terminal states with the reward model, and runs cfg.iters update
    iterations. A reward-model failure aborts after checkpointing the last
    completed step. Returns per-step progress records.
    """
    if not examples:
        raise ValidationError("finetune needs at least one scene")
    opt = AdamW(model.store, lr=cfg.lr, weight_decay=cfg.weight_decay,
                param_names=model.denoiser_param_names())
    pick_rng = make_rng(seed, 601)
    history = []
    encs: dict[int, EncodedScene] = {}
    for t in range(1, cfg.steps + 1):
        idx = int(pick_rng.integers(len(examples)))
        scene, example = examples[idx]
        if idx not in encs:
            encs[idx] = encode_scene(model, scene)  # encoder frozen, cacheable
        enc = encs[idx]
        chains = sample_chains(model, schedule, enc=enc, m=cfg.samples, seed=seed, step_index=t)
        n = len(scene.agents)
        futures = [c.states[:n] for c in chains]
        try:
            scored = score_scenes(reward_model, scene, futures)
        except Exception:
            if checkpoint_dir is not None and save_fn is not None:
                save_fn(model, Path(checkpoint_dir) / f"finetune_abort_step_{t - 1:05d}.params")
            raise
        raw = np.array([s.score for s in scored])
        for c, r in zip(chains, raw):
            c.reward = float(r)
        rewards = normalize_rewards(raw)

        rec = {"step": t, "scene": scene.scenario_id, "mean_raw_reward": float(raw.mean())}
        for _ in range(cfg.iters):
            objective, grads, diag = chain_loss_and_grads(
                model, schedule, enc, example, chains, rewards, cfg
            )
            if not opt.step(model.store, grads):
                raise ValidationError(f"non-finite gradient at fine-tune step {t}")
        rec.update({k: diag[k] for k in ("mean_ratio", "clip_fraction", "regression_loss")})
        rec["objective"] = objective
        history.append(rec)
        if checkpoint_dir is not None and save_fn is not None and t % cfg.checkpoint_every == 0:
            save_fn(model, Path(checkpoint_dir) / f"finetune_step_{t:05d}.params")
    if log_path is not None and history:
        with open(log_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(history[0].keys()))
            writer.writeheader()
            writer.writerows(history)
    return history
