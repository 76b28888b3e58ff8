"""Multi-head scaled dot-product attention with an additive relative-pose bias,
plus pre-norm residual transformer blocks.

The bias is a small MLP over (dx, dy, dheading) between element reference
poses, emitting one logit offset per head; poses are geometric constants so
no gradient flows into them.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..world.geometry import wrap_angle
from .layers import MLP, LayerNorm, Linear
from .params import ParamStore

NEG_INF = -1e30
POS_FEATURE_SCALE = 0.1


def relative_pose_features(q_pose: np.ndarray, kv_pose: np.ndarray) -> np.ndarray:
    """Pairwise (dx, dy, dheading) features, scaled; shapes [B,Tq,3],[B,Tk,3] -> [B,Tq,Tk,3]."""
    dxy = (kv_pose[:, None, :, :2] - q_pose[:, :, None, :2]) * POS_FEATURE_SCALE
    dh = wrap_angle(kv_pose[:, None, :, 2] - q_pose[:, :, None, 2])
    return np.concatenate([dxy, dh[..., None]], axis=-1)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, name: str, dim: int, n_heads: int,
                 rng: np.random.Generator, with_bias_mlp: bool = True, bias_hidden: int = 16):
        if dim % n_heads:
            raise ValidationError(f"{name}: dim {dim} not divisible by heads {n_heads}")
        self.name = name
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = Linear(store, f"{name}/q", dim, dim, rng)
        self.k = Linear(store, f"{name}/k", dim, dim, rng)
        self.v = Linear(store, f"{name}/v", dim, dim, rng)
        self.out = Linear(store, f"{name}/o", dim, dim, rng)
        self.bias_mlp = (
            MLP(store, f"{name}/bias", [3, bias_hidden, n_heads], rng) if with_bias_mlp else None
        )

    def _split(self, x):
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x):
        b, h, t, d = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * d)

    def forward(self, store: ParamStore, x_q: np.ndarray, kv: np.ndarray,
                key_mask: np.ndarray | None = None, rel: np.ndarray | None = None):
        """x_q [B,Tq,D], kv [B,Tk,D], key_mask [B,Tk] (True = attend),
        rel [B,Tq,Tk,3] relative-pose features."""
        if key_mask is not None and (~key_mask.any(axis=-1)).any():
            raise ValidationError(f"{self.name}: a query row has every key masked")
        q_flat, cq = self.q.forward(store, x_q)
        k_flat, ck = self.k.forward(store, kv)
        v_flat, cv = self.v.forward(store, kv)
        Q, K, V = self._split(q_flat), self._split(k_flat), self._split(v_flat)
        scores = np.einsum("bhqd,bhkd->bhqk", Q, K) / np.sqrt(self.head_dim)
        bias_cache = None
        if self.bias_mlp is not None and rel is not None:
            bias, bias_cache = self.bias_mlp.forward(store, rel)  # [B,Tq,Tk,H]
            scores = scores + bias.transpose(0, 3, 1, 2)
        if key_mask is not None:
            scores = np.where(key_mask[:, None, None, :], scores, NEG_INF)
        scores = scores - scores.max(axis=-1, keepdims=True)
        expd = np.exp(scores)
        attn = expd / expd.sum(axis=-1, keepdims=True)
        ctx = np.einsum("bhqk,bhkd->bhqd", attn, V)
        out, co = self.out.forward(store, self._merge(ctx))
        cache = (cq, ck, cv, co, Q, K, V, attn, bias_cache, key_mask)
        return out, cache

    def backward(self, store: ParamStore, cache, dout: np.ndarray, grads: dict):
        cq, ck, cv, co, Q, K, V, attn, bias_cache, key_mask = cache
        dctx_flat = self.out.backward(store, co, dout, grads)
        dctx = self._split(dctx_flat)
        dattn = np.einsum("bhqd,bhkd->bhqk", dctx, V)
        dV = np.einsum("bhqk,bhqd->bhkd", attn, dctx)
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        if self.bias_mlp is not None and bias_cache is not None:
            self.bias_mlp.backward(store, bias_cache, dscores.transpose(0, 2, 3, 1), grads)
        scale = 1.0 / np.sqrt(self.head_dim)
        dQ = np.einsum("bhqk,bhkd->bhqd", dscores, K) * scale
        dK = np.einsum("bhqk,bhqd->bhkd", dscores, Q) * scale
        dx_q = self.q.backward(store, cq, self._merge(dQ), grads)
        dkv = self.k.backward(store, ck, self._merge(dK), grads)
        dkv += self.v.backward(store, cv, self._merge(dV), grads)
        return dx_q, dkv


class AttentionBlock:
    """Pre-norm residual attention: x + MHA(LN(x), LN(kv))."""

    def __init__(self, store: ParamStore, name: str, dim: int, n_heads: int,
                 rng: np.random.Generator, cross: bool = False, with_bias_mlp: bool = True):
        self.name = name
        self.cross = cross
        self.ln_q = LayerNorm(store, f"{name}/ln_q", dim)
        self.ln_kv = LayerNorm(store, f"{name}/ln_kv", dim) if cross else None
        self.mha = MultiHeadAttention(store, f"{name}/mha", dim, n_heads, rng, with_bias_mlp)

    def forward(self, store: ParamStore, x: np.ndarray, kv: np.ndarray | None = None,
                key_mask: np.ndarray | None = None, rel: np.ndarray | None = None):
        hq, c_lnq = self.ln_q.forward(store, x)
        if self.cross:
            if kv is None:
                raise ValidationError(f"{self.name}: cross-attention block needs kv input")
            hk, c_lnk = self.ln_kv.forward(store, kv)
        else:
            hk, c_lnk = hq, None
        attn_out, c_mha = self.mha.forward(store, hq, hk, key_mask, rel)
        return x + attn_out, (c_lnq, c_lnk, c_mha)

    def backward(self, store: ParamStore, cache, dout: np.ndarray, grads: dict):
        c_lnq, c_lnk, c_mha = cache
        dhq, dhk = self.mha.backward(store, c_mha, dout, grads)
        if self.cross:
            dkv = self.ln_kv.backward(store, c_lnk, dhk, grads)
            dx = dout + self.ln_q.backward(store, c_lnq, dhq, grads)
            return dx, dkv
        dx = dout + self.ln_q.backward(store, c_lnq, dhq + dhk, grads)
        return dx, None


class FeedForwardBlock:
    """Pre-norm residual MLP: x + W2 gelu(W1 LN(x))."""

    def __init__(self, store: ParamStore, name: str, dim: int, rng: np.random.Generator,
                 hidden_mult: int = 4):
        self.name = name
        self.ln = LayerNorm(store, f"{name}/ln", dim)
        self.mlp = MLP(store, f"{name}/mlp", [dim, dim * hidden_mult, dim], rng)

    def forward(self, store: ParamStore, x: np.ndarray):
        h, c_ln = self.ln.forward(store, x)
        out, c_mlp = self.mlp.forward(store, h)
        return x + out, (c_ln, c_mlp)

    def backward(self, store: ParamStore, cache, dout: np.ndarray, grads: dict):
        c_ln, c_mlp = cache
        dh = self.mlp.backward(store, c_mlp, dout, grads)
        return dout + self.ln.backward(store, c_ln, dh, grads)
