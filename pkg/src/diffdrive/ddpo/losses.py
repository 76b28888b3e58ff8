"""Clipped importance-ratio policy pieces for diffusion fine-tuning.

The reverse chain is a multi-step MDP with a terminal reward; per-step ratios
compare the ego transition density under current vs sampling-time parameters.
The deterministic final step (sigma = 0) carries no density and is excluded
from ratio terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

LOG_RATIO_CLAMP = 20.0
LOG_2PI = float(np.log(2.0 * np.pi))


def normalize_rewards(rewards: np.ndarray) -> np.ndarray:
    """(r - mean) / population std; a zero-variance batch maps to all zeros so it
    contributes no policy gradient."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise ValidationError("reward normalization needs at least 2 samples")
    std = float(r.std())
    if std < 1e-8:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def transition_logprob(mu: np.ndarray, sigma: float, a: np.ndarray) -> float:
    """Log density of a diagonal Gaussian transition, summed over action dims."""
    if sigma <= 0.0:
        raise ValidationError("transition_logprob on a zero-variance (excluded) step")
    mu = np.asarray(mu, dtype=float)
    a = np.asarray(a, dtype=float)
    z = (a - mu) / sigma
    return float((-0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z).sum())


def transition_logprob_grad_mu(mu: np.ndarray, sigma: float, a: np.ndarray) -> np.ndarray:
    return (np.asarray(a, dtype=float) - np.asarray(mu, dtype=float)) / (sigma * sigma)


@dataclass
class PolicyStepDiag:
    clipped: int = 0
    clamped_log_ratio: int = 0
    skipped_nonfinite: int = 0


def policy_terms(reward: np.ndarray, logp_new: np.ndarray, logp_old: np.ndarray,
                 eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, PolicyStepDiag]:
    """Per-chain clipped surrogate terms for one diffusion step.

    Returns (loss_terms, dloss/dlogp_new, ratios, diagnostics); all inputs are
    [m] arrays. term = -min(r * rho, r * clip(rho, 1-eps, 1+eps)); ties pick
    the unclipped branch. Non-finite ratios contribute zero loss and gradient.
    """
    log_ratio = logp_new - logp_old
    diag = PolicyStepDiag()
    clamped = np.abs(log_ratio) > LOG_RATIO_CLAMP
    diag.clamped_log_ratio = int(clamped.sum())
    rho = np.exp(np.clip(log_ratio, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP))
    rho_c = np.clip(rho, 1.0 - eps, 1.0 + eps)
    u = reward * rho
    v = reward * rho_c
    bad = ~np.isfinite(u)
    diag.skipped_nonfinite = int(bad.sum())

    take_unclipped = u <= v
    loss = -np.where(take_unclipped, u, v)
    inside_clip = (rho > 1.0 - eps) & (rho < 1.0 + eps)
    grad_active = np.where(take_unclipped, ~clamped, inside_clip & ~clamped)
    dlogp = np.where(grad_active, -reward * rho, 0.0)
    diag.clipped = int((~take_unclipped).sum())

    loss = np.where(bad, 0.0, loss)
    dlogp = np.where(bad, 0.0, dlogp)
    return loss, dlogp, rho, diag
