"""Pairwise preference training for the scene evaluator.

Loss: -log sigmoid(R(accepted) - R(rejected)) plus an auxiliary Smooth L1
reconstruction of the accepted ego plan (accepted futures only).
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
from ..world.scene import Scene
from ..diffusion.features import scaled_ego_frame_states
from .model import EvalBatch, EvaluatorModel, build_eval_batch


@dataclass
class RewardTrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 2e-4
    weight_decay: float = 1e-4
    aux_weight: float = 0.5
    val_fraction: float = 0.15


@dataclass
class PairExample:
    """Tensorized preference pair sharing one scene."""

    batch_a: EvalBatch
    batch_r: EvalBatch
    recon_target: np.ndarray  # [T_f, 4] scaled ego-frame accepted ego future
    pair_id: str = ""


def prepare_pair(model: EvaluatorModel, scene: Scene, accepted: np.ndarray,
                 rejected: np.ndarray, pair_id: str = "") -> PairExample:
    ego_idx = next(i for i, a in enumerate(scene.agents) if a.agent_id == scene.ego_id)
    return PairExample(
        batch_a=build_eval_batch(model, scene, [accepted]),
        batch_r=build_eval_batch(model, scene, [rejected]),
        recon_target=scaled_ego_frame_states(scene, np.asarray(accepted)[ego_idx]),
        pair_id=pair_id,
    )


def _stack_batches(batches: list[EvalBatch]) -> EvalBatch:
    return EvalBatch(**{
        name: np.concatenate([getattr(b, name) for b in batches])
        for name in EvalBatch.__dataclass_fields__
    })


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def preference_loss(model: EvaluatorModel, scene: Scene, accepted: np.ndarray,
                    rejected: np.ndarray, aux_weight: float) -> float:
    """-log sigmoid(R_a - R_r) + aux_weight * SmoothL1(recon_a - accepted ego plan)."""
    pair = prepare_pair(model, scene, accepted, rejected)
    loss, _ = pair_loss_and_grads(model, [pair], aux_weight, compute_grads=False)
    return loss


def pair_loss_and_grads(model: EvaluatorModel, pairs: list[PairExample], aux_weight: float,
                        compute_grads: bool = True):
    if not pairs:
        raise ValidationError("empty pair batch")
    B = len(pairs)
    batch = _stack_batches([p.batch_a for p in pairs] + [p.batch_r for p in pairs])
    scores, recons, cache = model.forward(batch)
    ra, rr = scores[:B], scores[B:]
    gap = ra - rr
    pref = softplus(-gap)
    targets = np.stack([p.recon_target for p in pairs])
    res = recons[:B] - targets
    aux = smooth_l1(res).mean(axis=(1, 2))
    loss = float(np.mean(pref + aux_weight * aux))
    if not compute_grads:
        return loss, None

    dscore = np.zeros_like(scores)
    dgap = -sigmoid(-gap) / B
    dscore[:B] = dgap
    dscore[B:] = -dgap
    drecon = np.zeros_like(recons)
    drecon[:B] = aux_weight * smooth_l1_grad(res) / (B * res.shape[1] * res.shape[2])
    grads = zero_grads_like(model.store)
    model.backward(cache, dscore, drecon, grads)
    return loss, grads


def pairwise_accuracy(model: EvaluatorModel, pairs: list[PairExample]) -> float:
    if not pairs:
        return float("nan")
    correct = 0
    for lo in range(0, len(pairs), 32):
        chunk = pairs[lo : lo + 32]
        batch = _stack_batches([p.batch_a for p in chunk] + [p.batch_r for p in chunk])
        scores, _, _ = model.forward(batch)
        B = len(chunk)
        correct += int((scores[:B] > scores[B:]).sum())
    return correct / len(pairs)


def train_reward(model: EvaluatorModel, pairs: list[PairExample], cfg: RewardTrainConfig,
                 seed: int, log_path: Path | None = None) -> list[dict]:
    """AdamW preference training; returns per-epoch train loss and accuracies."""
    if len(pairs) < 2:
        raise ValidationError("preference training needs at least 2 pairs")
    order = make_rng(seed, 200).permutation(len(pairs))
    n_val = max(1, int(len(pairs) * cfg.val_fraction))
    val = [pairs[i] for i in order[:n_val]]
    train = [pairs[i] for i in order[n_val:]]
    opt = AdamW(model.store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = make_rng(seed, 201)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train))
        losses = []
        for lo in range(0, len(train), cfg.batch_size):
            chunk = [train[i] for i in perm[lo : lo + cfg.batch_size]]
            loss, grads = pair_loss_and_grads(model, chunk, cfg.aux_weight)
            if not opt.step(model.store, grads):
                raise ValidationError(f"non-finite gradient in epoch {epoch + 1}")
            losses.append(loss)
        history.append({
            "epoch": epoch + 1,
            "train_loss": float(np.mean(losses)),
            "train_acc": pairwise_accuracy(model, train),
            "val_acc": pairwise_accuracy(model, val),
        })
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(history[0].keys()))
            writer.writeheader()
            writer.writerows(history)
    return history


def write_eval_report(model: EvaluatorModel, pairs: list[PairExample], path: Path) -> float:
    """Per-pair score CSV (pair id, score_a, score_r, correct); returns accuracy."""
    rows = []
    for lo in range(0, len(pairs), 32):
        chunk = pairs[lo : lo + 32]
        batch = _stack_batches([p.batch_a for p in chunk] + [p.batch_r for p in chunk])
        scores, _, _ = model.forward(batch)
        B = len(chunk)
        for i, p in enumerate(chunk):
            rows.append({
                "pair_id": p.pair_id,
                "score_a": repr(float(scores[i])),
                "score_r": repr(float(scores[B + i])),
                "correct": int(scores[i] > scores[B + i]),
            })
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["pair_id", "score_a", "score_r", "correct"])
        writer.writeheader()
        writer.writerows(rows)
    return float(np.mean([r["correct"] for r in rows])) if rows else float("nan")
