"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


def check_gradients(loss_and_grads, store: ParamStore, param_names=None,
                    h: float = 1e-6, atol: float = 1e-7) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_and_grads() -> (loss, grads dict) evaluated at the store's current
    values; every element of every selected parameter is perturbed.

    Differences below atol count as exact agreement: structurally-zero
    gradients (e.g. a key-projection bias, which softmax cancels) would
    otherwise divide finite-difference roundoff by itself.
    """
    _, grads = loss_and_grads()
    names = param_names if param_names is not None else list(store.keys())
    worst = 0.0
    for name in names:
        arr = store[name]
        analytic = grads[name].reshape(-1)
        for i in range(arr.size):
            orig = arr.flat[i]
            step = h * max(1.0, abs(orig))
            arr.flat[i] = orig + step
            lp, _ = loss_and_grads()
            arr.flat[i] = orig - step
            lm, _ = loss_and_grads()
            arr.flat[i] = orig
            fd = (lp - lm) / (2.0 * step)
            diff = abs(analytic[i] - fd)
            if diff < atol:
                continue
            worst = max(worst, diff / max(abs(analytic[i]) + abs(fd), 1e-8))
    return worst
