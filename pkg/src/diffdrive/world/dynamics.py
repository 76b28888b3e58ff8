"""Kinematic agent dynamics: semi-implicit Euler rollout, its adjoint, and
exact action fitting from logged states.

State is (x, y, heading, speed); action is (acceleration, yaw_rate).
Per step:

    v' = max(0, v + a * dt)
    h' = wrap(h + w * dt)
    x' = x + v' * cos(h') * dt
    y' = y + v' * sin(h') * dt

The updated speed and heading drive the position update, which makes the
map states -> actions invertible (see fit_actions).
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .geometry import wrap_angle


def rollout_dynamics(start: np.ndarray, actions: np.ndarray, dt: float) -> np.ndarray:
    """Roll joint actions [N, T, 2] out from start states [N, 4] -> states [N, T, 4]."""
    start = np.asarray(start, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if actions.ndim != 3 or actions.shape[-1] != 2:
        raise ValidationError(f"actions must have shape [N, T, 2], got {actions.shape}")
    if start.shape != (actions.shape[0], 4):
        raise ValidationError(f"start states {start.shape} do not match actions {actions.shape}")
    bad = ~np.isfinite(actions)
    if bad.any():
        n, t, _ = np.argwhere(bad)[0]
        raise ValidationError(f"non-finite action for agent {n} at step {t}")

    N, T, _ = actions.shape
    states = np.empty((N, T, 4))
    x, y, h, v = start[:, 0].copy(), start[:, 1].copy(), start[:, 2].copy(), start[:, 3].copy()
    for t in range(T):
        v = np.maximum(0.0, v + actions[:, t, 0] * dt)
        h = wrap_angle(h + actions[:, t, 1] * dt)
        x = x + v * np.cos(h) * dt
        y = y + v * np.sin(h) * dt
        states[:, t, 0] = x
        states[:, t, 1] = y
        states[:, t, 2] = h
        states[:, t, 3] = v
    return states


def rollout_backward(
    start: np.ndarray, actions: np.ndarray, states: np.ndarray, grad_states: np.ndarray, dt: float
) -> np.ndarray:
    """Adjoint of rollout_dynamics: d(loss)/d(actions) given d(loss)/d(states).

    The speed clamp passes gradient only where the pre-clamp speed is strictly
    positive; angle wrapping has unit derivative.
    """
    actions = np.asarray(actions, dtype=float)
    states = np.asarray(states, dtype=float)
    grad_states = np.asarray(grad_states, dtype=float)
    N, T, _ = actions.shape
    grad_actions = np.zeros_like(actions)

    v_prev = np.concatenate([np.asarray(start, dtype=float)[:, None, 3], states[:, :-1, 3]], axis=1)
    unclamped = v_prev + actions[:, :, 0] * dt
    pass_through = (unclamped > 0.0).astype(float)

    cos_h = np.cos(states[:, :, 2])
    sin_h = np.sin(states[:, :, 2])

    gx_suffix = np.zeros(N)
    gy_suffix = np.zeros(N)
    dv_next = np.zeros(N)
    dh_next = np.zeros(N)
    for t in range(T - 1, -1, -1):
        gx_suffix = gx_suffix + grad_states[:, t, 0]
        gy_suffix = gy_suffix + grad_states[:, t, 1]
        dv = (
            grad_states[:, t, 3]
            + gx_suffix * cos_h[:, t] * dt
            + gy_suffix * sin_h[:, t] * dt
            + (dv_next * pass_through[:, t + 1] if t + 1 < T else 0.0)
        )
        v_t = states[:, t, 3]
        dh = (
            grad_states[:, t, 2]
            + gx_suffix * (-v_t * sin_h[:, t]) * dt
            + gy_suffix * (v_t * cos_h[:, t]) * dt
            + dh_next
        )
        grad_actions[:, t, 0] = dv * pass_through[:, t] * dt
        grad_actions[:, t, 1] = dh * dt
        dv_next = dv
        dh_next = dh
    return grad_actions


def fit_actions(start: np.ndarray, states: np.ndarray, dt: float) -> np.ndarray:
    """Recover the action sequence that rolls out to the given states.

    Exact inverse for trajectories produced by rollout_dynamics: speeds and
    headings determine accelerations and yaw rates directly; positions then
    follow by construction. When a step's speed is zero the boundary braking
    action (-v_prev / dt) is chosen.
    """
    start = np.asarray(start, dtype=float)
    states = np.asarray(states, dtype=float)
    v = np.concatenate([start[:, None, 3], states[:, :, 3]], axis=1)
    h = np.concatenate([start[:, None, 2], states[:, :, 2]], axis=1)
    accel = np.diff(v, axis=1) / dt
    yaw_rate = wrap_angle(np.diff(h, axis=1)) / dt
    return np.stack([accel, yaw_rate], axis=-1)
