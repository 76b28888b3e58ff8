"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .params import ParamStore


class AdamW:
    """Standard AdamW over a ParamStore, optionally restricted to named params.

    step() rejects non-finite gradients: parameters and moments are left
    untouched and False is returned so the caller can react.
    """

    def __init__(self, store: ParamStore, lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 param_names: list[str] | None = None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.param_names = list(param_names) if param_names is not None else list(store.keys())
        for name in self.param_names:
            if name not in store:
                raise ValidationError(f"optimizer param {name!r} not in store")
        self.m = {n: np.zeros_like(store[n]) for n in self.param_names}
        self.v = {n: np.zeros_like(store[n]) for n in self.param_names}
        self.step_count = 0

    def step(self, store: ParamStore, grads: dict[str, np.ndarray]) -> bool:
        for name in self.param_names:
            g = grads[name]
            if g.shape != store[name].shape:
                raise ValidationError(f"gradient {name!r}: shape {g.shape} != {store[name].shape}")
            if not np.isfinite(g).all():
                return False
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name in self.param_names:
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            update = (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            store[name] = store[name] - self.lr * update - self.lr * self.weight_decay * store[name]
        return True
