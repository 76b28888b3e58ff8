"""Differentiable building blocks with explicit forward caches and backward passes.

Everything operates on the last axis of float64 arrays and is shape-agnostic
over leading (batch, token) axes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import ValidationError
from .params import ParamStore

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * phi


def smooth_l1(residual: np.ndarray) -> np.ndarray:
    """Element-wise Smooth L1: 0.5 r^2 for |r| < 1, |r| - 0.5 otherwise."""
    r = np.abs(residual)
    return np.where(r < 1.0, 0.5 * residual * residual, r - 0.5)


def smooth_l1_grad(residual: np.ndarray) -> np.ndarray:
    return np.clip(residual, -1.0, 1.0)


def linear_init(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), size=(n_in, n_out))


class Linear:
    """Affine layer owning 'name/W' and 'name/b' in a ParamStore."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, zero_init: bool = False):
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        w = np.zeros((n_in, n_out)) if zero_init else linear_init(rng, n_in, n_out)
        store.register(f"{name}/W", w)
        store.register(f"{name}/b", np.zeros(n_out))

    def forward(self, store: ParamStore, x: np.ndarray):
        if x.shape[-1] != self.n_in:
            raise ValidationError(f"layer {self.name}: input width {x.shape[-1]} != {self.n_in}")
        return x @ store[f"{self.name}/W"] + store[f"{self.name}/b"], x

    def backward(self, store: ParamStore, cache, dout: np.ndarray, grads: dict):
        x = cache
        flat_x = x.reshape(-1, self.n_in)
        flat_d = dout.reshape(-1, self.n_out)
        grads[f"{self.name}/W"] += flat_x.T @ flat_d
        grads[f"{self.name}/b"] += flat_d.sum(axis=0)
        return dout @ store[f"{self.name}/W"].T


class LayerNorm:
    """Per-feature layer norm over the last axis."""

    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-6):
        self.name = name
        self.dim = dim
        self.eps = eps
        store.register(f"{name}/g", np.ones(dim))
        store.register(f"{name}/b", np.zeros(dim))

    def forward(self, store: ParamStore, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        return xhat * store[f"{self.name}/g"] + store[f"{self.name}/b"], (xhat, inv)

    def backward(self, store: ParamStore, cache, dout: np.ndarray, grads: dict):
        xhat, inv = cache
        g = store[f"{self.name}/g"]
        flat = dout.reshape(-1, self.dim)
        grads[f"{self.name}/g"] += (dout * xhat).reshape(-1, self.dim).sum(axis=0)
        grads[f"{self.name}/b"] += flat.sum(axis=0)
        dxhat = dout * g
        n = self.dim
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx


class MLP:
    """GELU-activated affine stack; the final layer is linear."""

    def __init__(self, store: ParamStore, name: str, dims: list[int],
                 rng: np.random.Generator, zero_init_last: bool = False):
        self.name = name
        self.layers = [
            Linear(store, f"{name}/fc{i}", dims[i], dims[i + 1], rng,
                   zero_init=(zero_init_last and i == len(dims) - 2))
            for i in range(len(dims) - 1)
        ]

    def forward(self, store: ParamStore, x: np.ndarray):
        caches = []
        h = x
        for i, layer in enumerate(self.layers):
            h, c = layer.forward(store, h)
            pre = h if i < len(self.layers) - 1 else None
            caches.append((c, pre))
            if i < len(self.layers) - 1:
                h = gelu(h)
        return h, caches

    def backward(self, store: ParamStore, caches, dout: np.ndarray, grads: dict):
        d = dout
        for i in range(len(self.layers) - 1, -1, -1):
            c, pre = caches[i]
            if pre is not None:
                d = d * gelu_grad(pre)
            d = self.layers[i].backward(store, c, d, grads)
        return d
