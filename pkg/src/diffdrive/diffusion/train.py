"""Base denoising training: noise fitted ground-truth actions, predict them
back, and penalize the rolled-out state error with Smooth L1.
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
from ..world.dynamics import fit_actions, rollout_backward, rollout_dynamics
from ..world.geometry import wrap_angle
from ..world.scene import ScenarioLog, WorldParams
from .features import tensorize_scene
from .model import DenoiserModel, FeatureBatch
from .sample import _rollout_batch
from .schedule import NoiseSchedule


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 2e-4
    lr_decay: float = 0.95
    lr_decay_every: int = 1000
    weight_decay: float = 1e-4
    val_fraction: float = 0.1


@dataclass
class TrainExample:
    feats: object
    gt_states: np.ndarray  # [N_cap, T_f, 4], padded rows zero
    gt_actions: np.ndarray  # [N_cap, T_f, 2]
    agent_valid: np.ndarray  # [N_cap]


def prepare_example(log: ScenarioLog, params: WorldParams) -> TrainExample:
    scene, fut = log.training_example(params)
    feats = tensorize_scene(scene, params)
    N = params.agent_cap
    n = len(scene.agents)
    gt_states = np.zeros((N, params.future_len, 4))
    gt_states[:n] = fut
    start = feats.start_states
    gt_actions = np.zeros((N, params.future_len, 2))
    gt_actions[:n] = fit_actions(start[:n], fut, params.dt)
    return TrainExample(feats=feats, gt_states=gt_states, gt_actions=gt_actions,
                        agent_valid=feats.agent_mask.copy())


def base_loss_and_grads(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    examples: list[TrainExample],
    k_levels: np.ndarray,
    noise: np.ndarray,
    compute_grads: bool = True,
):
    """Joint denoising loss over a batch: SmoothL1(f(a0_hat) - x), averaged over
    valid agents, steps, and state components."""
    if not examples:
        raise ValidationError("empty batch")
    batch = FeatureBatch.stack([e.feats for e in examples])
    a0 = np.stack([e.gt_actions for e in examples])
    gt = np.stack([e.gt_states for e in examples])
    valid = np.stack([e.agent_valid for e in examples])
    B = a0.shape[0]

    ab = schedule.alpha_bar[k_levels][:, None, None, None]
    a_k = np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * noise

    C, route_tok, enc_cache = model.encode(batch)
    a0_hat, den_cache = model.denoise(C, route_tok, batch, a_k, k_levels)
    states = _rollout_batch(batch.start_states, a0_hat, model.world.dt)

    residual = states - gt
    residual[..., 2] = wrap_angle(residual[..., 2])
    w = valid[:, :, None, None].astype(float)
    n_valid = float(w.sum() * residual.shape[2] * residual.shape[3])
    loss = float((smooth_l1(residual) * w).sum() / n_valid)
    if not compute_grads:
        return loss, None

    dres = smooth_l1_grad(residual) * w / n_valid
    B, N, T, _ = a0_hat.shape
    da0_hat = rollout_backward(
        batch.start_states.reshape(B * N, 4),
        a0_hat.reshape(B * N, T, 2),
        states.reshape(B * N, T, 4),
        dres.reshape(B * N, T, 4),
        model.world.dt,
    ).reshape(B, N, T, 2)

    grads = zero_grads_like(model.store)
    dC, droute = model.denoise_backward(den_cache, da0_hat, grads)
    model.encode_backward(enc_cache, dC, droute, grads)
    return loss, grads


def train_base(
    model: DenoiserModel,
    schedule: NoiseSchedule,
    logs: list[ScenarioLog],
    cfg: TrainConfig,
    seed: int,
    log_path: Path | None = None,
) -> list[dict]:
    """Train the denoiser; returns per-epoch records (train/val loss, lr)."""
    if not logs:
        raise ValidationError("empty dataset")
    examples = [prepare_example(log, model.world) for log in logs]
    order = make_rng(seed, 100).permutation(len(examples))
    n_val = max(1, int(len(examples) * cfg.val_fraction)) if len(examples) > 1 else 0
    val = [examples[i] for i in order[:n_val]]
    train = [examples[i] for i in order[n_val:]]

    opt = AdamW(model.store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = make_rng(seed, 101)
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train))
        losses = []
        for lo in range(0, len(train), cfg.batch_size):
            batch = [train[i] for i in perm[lo : lo + cfg.batch_size]]
            k_levels = rng.integers(1, schedule.K + 1, size=len(batch))
            noise = rng.standard_normal((len(batch),) + batch[0].gt_actions.shape)
            loss, grads = base_loss_and_grads(model, schedule, batch, k_levels, noise)
            opt.lr = cfg.lr * cfg.lr_decay ** (step // cfg.lr_decay_every)
            if not opt.step(model.store, grads):
                raise ValidationError(f"non-finite gradient at step {step}")
            losses.append(loss)
            step += 1
        rec = {"epoch": epoch + 1, "train_loss": float(np.mean(losses)), "lr": opt.lr}
        if val:
            rec["val_loss"] = evaluate_loss(model, schedule, val, seed)
        history.append(rec)
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(history[0].keys()))
            writer.writeheader()
            writer.writerows(history)
    return history


def evaluate_loss(model: DenoiserModel, schedule: NoiseSchedule,
                  examples: list[TrainExample], seed: int) -> float:
    """Validation denoising loss with fixed noise draws (comparable across epochs)."""
    rng = make_rng(seed, 102)
    losses = []
    for lo in range(0, len(examples), 16):
        batch = examples[lo : lo + 16]
        k_levels = rng.integers(1, schedule.K + 1, size=len(batch))
        noise = rng.standard_normal((len(batch),) + batch[0].gt_actions.shape)
        loss, _ = base_loss_and_grads(model, schedule, batch, k_levels, noise, compute_grads=False)
        losses.append(loss)
    return float(np.mean(losses))
