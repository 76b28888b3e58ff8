"""Joint action-denoising model.

Encoder: per-agent history time-attention, polyline MLP with max-pooling
(shared between map and route), and a self-attention fusion stack producing
scene tokens C over agents + map elements. Denoiser: noised joint actions
embedded per agent, then layers of self-attention over agents,
cross-attention into C, a dedicated ego-to-route cross-attention, and a
feed-forward block; a zero-initialized head projects back to actions, so an
untrained model predicts zero actions everywhere.

Parameters are namespaced 'encoder/...' and 'denoiser/...'; fine-tuning
updates only the latter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..nn.attention import AttentionBlock, FeedForwardBlock, relative_pose_features
from ..nn.layers import Linear, LayerNorm, MLP, gelu, gelu_grad
from ..nn.params import ParamStore
from ..world.scene import WorldParams
from .features import AGENT_FEAT_DIM, POLY_FEAT_DIM, SceneFeatures


@dataclass(frozen=True)
class DenoiserConfig:
    dim: int = 64
    heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    diffusion_steps: int = 10
    ffn_mult: int = 4


@dataclass
class FeatureBatch:
    """Stacked SceneFeatures with a leading batch axis."""

    agent_feats: np.ndarray
    agent_step_pose: np.ndarray
    agent_mask: np.ndarray
    agent_pose: np.ndarray
    map_feats: np.ndarray
    map_mask: np.ndarray
    map_pose: np.ndarray
    route_feats: np.ndarray
    route_mask: np.ndarray
    route_pose: np.ndarray
    start_states: np.ndarray

    @classmethod
    def stack(cls, feats: list[SceneFeatures]) -> "FeatureBatch":
        fields = {}
        for name in cls.__dataclass_fields__:
            fields[name] = np.stack([getattr(f, name) for f in feats])
        return cls(**fields)

    @property
    def batch_size(self) -> int:
        return self.agent_feats.shape[0]

    def scene_pose(self) -> np.ndarray:
        return np.concatenate([self.agent_pose, self.map_pose], axis=1)

    def scene_mask(self) -> np.ndarray:
        return np.concatenate([self.agent_mask, self.map_mask], axis=1)


class _PolylineEncoder:
    """Per-waypoint MLP with max-pooling over waypoints."""

    def __init__(self, store: ParamStore, name: str, dim: int, rng):
        self.fc_in = Linear(store, f"{name}/in", POLY_FEAT_DIM, dim, rng)
        self.fc_mid = Linear(store, f"{name}/mid", dim, dim, rng)

    def forward(self, store, feats):
        h1, c1 = self.fc_in.forward(store, feats)
        g = gelu(h1)
        h2, c2 = self.fc_mid.forward(store, g)
        pooled = h2.max(axis=-2)
        argmax = h2.argmax(axis=-2)
        return pooled, (c1, h1, c2, argmax, h2.shape)

    def backward(self, store, cache, dpooled, grads):
        c1, h1, c2, argmax, shape = cache
        dh2 = np.zeros(shape)
        np.put_along_axis(dh2, argmax[..., None, :], dpooled[..., None, :], axis=-2)
        dg = self.fc_mid.backward(store, c2, dh2, grads)
        self.fc_in.backward(store, c1, dg * gelu_grad(h1), grads)


class DenoiserModel:
    def __init__(self, world: WorldParams, cfg: DenoiserConfig, rng: np.random.Generator):
        self.world = world
        self.cfg = cfg
        self.store = ParamStore()
        D, H = cfg.dim, cfg.heads
        s = self.store

        self.hist_in = Linear(s, "encoder/hist/in", AGENT_FEAT_DIM, D, rng)
        s.register("encoder/hist/pos", rng.normal(0.0, 0.02, size=(world.history_len, D)))
        self.hist_attn = AttentionBlock(s, "encoder/hist/attn", D, H, rng)
        self.hist_ffn = FeedForwardBlock(s, "encoder/hist/ffn", D, rng, cfg.ffn_mult)
        self.poly_enc = _PolylineEncoder(s, "encoder/poly", D, rng)
        self.fusion = [
            (
                AttentionBlock(s, f"encoder/fuse{i}/attn", D, H, rng),
                FeedForwardBlock(s, f"encoder/fuse{i}/ffn", D, rng, cfg.ffn_mult),
            )
            for i in range(cfg.enc_layers)
        ]

        s.register("denoiser/k_embed", rng.normal(0.0, 0.02, size=(cfg.diffusion_steps + 1, D)))
        self.act_in = Linear(s, "denoiser/act_in", world.future_len * 2, D, rng)
        self.dec = [
            (
                AttentionBlock(s, f"denoiser/dec{i}/self", D, H, rng),
                AttentionBlock(s, f"denoiser/dec{i}/scene", D, H, rng, cross=True),
                AttentionBlock(s, f"denoiser/dec{i}/route", D, H, rng, cross=True),
                FeedForwardBlock(s, f"denoiser/dec{i}/ffn", D, rng, cfg.ffn_mult),
            )
            for i in range(cfg.dec_layers)
        ]
        self.out_ln = LayerNorm(s, "denoiser/out_ln", D)
        self.out_mlp = MLP(s, "denoiser/out", [D, D, world.future_len * 2], rng, zero_init_last=True)

    # -- parameter partitions -------------------------------------------------
    def encoder_param_names(self) -> list[str]:
        return self.store.names_with_prefix("encoder/")

    def denoiser_param_names(self) -> list[str]:
        return self.store.names_with_prefix("denoiser/")

    # -- encoder ---------------------------------------------------------------
    def encode(self, batch: FeatureBatch):
        """Scene condition tokens C [B, N+M, D] and route tokens [B, R, D]."""
        s = self.store
        B, N, T, _ = batch.agent_feats.shape

        h, c_in = self.hist_in.forward(s, batch.agent_feats)
        h = h + s["encoder/hist/pos"]
        h = h.reshape(B * N, T, -1)
        step_pose = batch.agent_step_pose.reshape(B * N, T, 3)
        trel = relative_pose_features(step_pose, step_pose)
        h, c_attn = self.hist_attn.forward(s, h, rel=trel)
        h, c_ffn = self.hist_ffn.forward(s, h)
        agent_tok = h[:, -1, :].reshape(B, N, -1) * batch.agent_mask[..., None]

        map_tok, c_map = self.poly_enc.forward(s, batch.map_feats)
        map_tok = map_tok * batch.map_mask[..., None]
        route_tok, c_route = self.poly_enc.forward(s, batch.route_feats)
        route_tok = route_tok * batch.route_mask[..., None]

        tokens = np.concatenate([agent_tok, map_tok], axis=1)
        smask = batch.scene_mask()
        srel = relative_pose_features(batch.scene_pose(), batch.scene_pose())
        c_fuse = []
        for attn, ffn in self.fusion:
            tokens, ca = attn.forward(s, tokens, key_mask=smask, rel=srel)
            tokens, cf = ffn.forward(s, tokens)
            c_fuse.append((ca, cf))
        C = tokens * smask[..., None]
        cache = (c_in, c_attn, c_ffn, c_map, c_route, c_fuse, batch, (B, N, T), h.shape)
        return C, route_tok, cache

    def encode_backward(self, cache, dC, droute, grads):
        s = self.store
        c_in, c_attn, c_ffn, c_map, c_route, c_fuse, batch, (B, N, T), h_shape = cache
        smask = batch.scene_mask()
        d = dC * smask[..., None]
        for (attn, ffn), (ca, cf) in zip(reversed(self.fusion), reversed(c_fuse)):
            d = ffn.backward(s, cf, d, grads)
            d, _ = attn.backward(s, ca, d, grads)
        dagent = d[:, :N] * batch.agent_mask[..., None]
        dmap = d[:, N:] * batch.map_mask[..., None]
        self.poly_enc.backward(s, c_map, dmap, grads)
        self.poly_enc.backward(s, c_route, droute * batch.route_mask[..., None], grads)

        dh = np.zeros(h_shape)
        dh[:, -1, :] = dagent.reshape(B * N, -1)
        dh = self.hist_ffn.backward(s, c_ffn, dh, grads)
        dh, _ = self.hist_attn.backward(s, c_attn, dh, grads)
        dh = dh.reshape(B, N, T, -1)
        grads["encoder/hist/pos"] += dh.sum(axis=(0, 1))
        self.hist_in.backward(s, c_in, dh, grads)

    # -- denoiser ----------------------------------------------------------------
    def denoise(self, C, route_tok, batch: FeatureBatch, a_k: np.ndarray, k_levels: np.ndarray):
        """Predict clean actions from noised actions at the given noise levels.

        a_k [B, N, T_f, 2]; k_levels [B] integer noise levels. Returns
        (a0_hat [B, N, T_f, 2], cache).
        """
        s = self.store
        B, N = a_k.shape[0], a_k.shape[1]
        k_levels = np.asarray(k_levels, dtype=int)
        if a_k.shape[2] != self.world.future_len:
            raise ValidationError(f"actions horizon {a_k.shape[2]} != {self.world.future_len}")
        if k_levels.min() < 0 or k_levels.max() > self.cfg.diffusion_steps:
            raise ValidationError(f"noise level outside 0..{self.cfg.diffusion_steps}")
        if not batch.route_mask.any(axis=1).all():
            raise ValidationError("every scene needs at least one route polyline")

        flat = a_k.reshape(B, N, -1)
        h, c_act = self.act_in.forward(s, flat)
        h = h + s["denoiser/k_embed"][k_levels][:, None, :] + C[:, :N, :]

        smask, spose = batch.scene_mask(), batch.scene_pose()
        arel = relative_pose_features(batch.agent_pose, batch.agent_pose)
        crel = relative_pose_features(batch.agent_pose, spose)
        erel = relative_pose_features(batch.agent_pose[:, :1], batch.route_pose)
        caches = []
        for self_attn, scene_attn, route_attn, ffn in self.dec:
            h, c1 = self_attn.forward(s, h, key_mask=batch.agent_mask, rel=arel)
            h, c2 = scene_attn.forward(s, h, kv=C, key_mask=smask, rel=crel)
            ego, c3 = route_attn.forward(s, h[:, :1], kv=route_tok, key_mask=batch.route_mask, rel=erel)
            h = np.concatenate([ego, h[:, 1:]], axis=1)
            h, c4 = ffn.forward(s, h)
            caches.append((c1, c2, c3, c4))
        hn, c_ln = self.out_ln.forward(s, h)
        out, c_out = self.out_mlp.forward(s, hn)
        a0_hat = out.reshape(a_k.shape)
        cache = (c_act, caches, c_ln, c_out, k_levels, (B, N))
        return a0_hat, cache

    def denoise_backward(self, cache, da0_hat, grads):
        """Backprop through the denoising stack; returns (dC, droute_tok)."""
        s = self.store
        c_act, caches, c_ln, c_out, k_levels, (B, N) = cache
        d = self.out_mlp.backward(s, c_out, da0_hat.reshape(B, N, -1), grads)
        d = self.out_ln.backward(s, c_ln, d, grads)
        dC = None
        droute = None
        for (self_attn, scene_attn, route_attn, ffn), (c1, c2, c3, c4) in zip(
            reversed(self.dec), reversed(caches)
        ):
            d = ffn.backward(s, c4, d, grads)
            dego, dr = route_attn.backward(s, c3, d[:, :1], grads)
            droute = dr if droute is None else droute + dr
            d = np.concatenate([dego, d[:, 1:]], axis=1)
            d, dc = scene_attn.backward(s, c2, d, grads)
            dC = dc if dC is None else dC + dc
            d, _ = self_attn.backward(s, c1, d, grads)
        np.add.at(grads["denoiser/k_embed"], k_levels, d.sum(axis=1))
        dC_in = np.zeros_like(dC)
        dC_in[:, :N, :] = d
        dC = dC + dC_in
        self.act_in.backward(s, c_act, d, grads)
        return dC, droute
