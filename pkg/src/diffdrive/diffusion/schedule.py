"""Cosine noise schedule and forward noising.

Arrays are indexed by noise level k in 0..K with the convention
alpha_bar[0] = 1 (level 0 is clean data); beta[0] and alpha[0] are unused
placeholders. The final reverse step (k = 1) is deterministic because
alpha_bar[0] = 1 forces its posterior variance to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ValidationError

COSINE_S = 0.008
BETA_MAX = 0.999


@dataclass(frozen=True)
class NoiseSchedule:
    K: int
    beta: np.ndarray  # [K+1], beta[0] unused
    alpha: np.ndarray  # [K+1], alpha[0] = 1
    alpha_bar: np.ndarray  # [K+1], alpha_bar[0] = 1, strictly decreasing

    def __post_init__(self):
        if not (np.diff(self.alpha_bar) < 0).all():
            raise ValidationError("alpha_bar must be strictly decreasing")

    def posterior_coeffs(self, k: int) -> tuple[float, float, float]:
        """(coeff on predicted clean actions, coeff on current noised actions,
        posterior std) of the reverse transition at level k."""
        self._check_level(k)
        ab_k, ab_prev = self.alpha_bar[k], self.alpha_bar[k - 1]
        c_clean = np.sqrt(ab_prev) * self.beta[k] / (1.0 - ab_k)
        c_noised = np.sqrt(self.alpha[k]) * (1.0 - ab_prev) / (1.0 - ab_k)
        var = (1.0 - ab_prev) / (1.0 - ab_k) * self.beta[k]
        return float(c_clean), float(c_noised), float(np.sqrt(max(var, 0.0)))

    def _check_level(self, k: int):
        if not (1 <= k <= self.K):
            raise ValidationError(f"noise level {k} outside 1..{self.K}")


def cosine_schedule(K: int) -> NoiseSchedule:
    """Squared-cosine alpha_bar ramp; betas derived from consecutive ratios and
    clipped at BETA_MAX, after which alpha_bar is rebuilt as the cumulative
    product so the recursion alpha_bar[k] = alpha_bar[k-1] * alpha[k] holds
    exactly."""
    if K < 1:
        raise ConfigError(f"diffusion steps K must be >= 1, got {K}")
    k = np.arange(K + 1, dtype=float)
    f = np.cos(((k / K + COSINE_S) / (1.0 + COSINE_S)) * np.pi / 2.0) ** 2
    ab_closed = f / f[0]
    beta_tail = np.clip(1.0 - ab_closed[1:] / ab_closed[:-1], 0.0, BETA_MAX)
    beta = np.concatenate([[0.0], beta_tail])
    alpha = 1.0 - beta
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha[1:])])
    return NoiseSchedule(K=K, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def add_noise(a0: np.ndarray, k: int, schedule: NoiseSchedule, noise: np.ndarray) -> np.ndarray:
    """Forward noising a_k = sqrt(ab_k) a0 + sqrt(1 - ab_k) eps; one level for
    the whole joint action tensor."""
    if not (0 <= k <= schedule.K):
        raise ValidationError(f"noise level {k} outside 0..{schedule.K}")
    a0 = np.asarray(a0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != a0.shape:
        raise ValidationError(f"noise shape {noise.shape} != actions shape {a0.shape}")
    ab = schedule.alpha_bar[k]
    return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * noise
