"""Scene evaluator: scores generated future scenes and reconstructs the ego plan.

Per-agent future trajectories are encoded with time attention, fused with map
and route tokens through self-attention, then an ego-query cross-attention
decoder produces a planning-centric feature. Two MLP heads emit the scalar
score (unbounded) and the ego-plan reconstruction. The decoder attends only
within its own scene's elements; batch entries never interact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..nn.attention import AttentionBlock, FeedForwardBlock, relative_pose_features
from ..nn.layers import Linear, MLP
from ..nn.params import ParamStore
from ..world.scene import Scene, WorldParams
from ..diffusion.features import AGENT_FEAT_DIM, tensorize_future, tensorize_scene
from ..diffusion.model import _PolylineEncoder


@dataclass(frozen=True)
class EvaluatorConfig:
    dim: int = 64
    heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_mult: int = 4


@dataclass
class EvalBatch:
    """Stacked evaluator inputs: futures plus the vector map (route included)."""

    fut_feats: np.ndarray  # [B, N, T_f, AGENT_FEAT_DIM]
    fut_pose: np.ndarray  # [B, N, 3]
    agent_mask: np.ndarray  # [B, N]
    map_feats: np.ndarray
    map_mask: np.ndarray
    map_pose: np.ndarray
    route_feats: np.ndarray
    route_mask: np.ndarray
    route_pose: np.ndarray

    def element_mask(self) -> np.ndarray:
        return np.concatenate([self.agent_mask, self.map_mask, self.route_mask], axis=1)

    def element_pose(self) -> np.ndarray:
        return np.concatenate([self.fut_pose, self.map_pose, self.route_pose], axis=1)


@dataclass
class ScoredScene:
    future: np.ndarray
    score: float
    recon: np.ndarray  # [T_f, 4] scaled ego-frame plan reconstruction


class EvaluatorModel:
    def __init__(self, world: WorldParams, cfg: EvaluatorConfig, rng: np.random.Generator):
        self.world = world
        self.cfg = cfg
        self.store = ParamStore()
        D, H = cfg.dim, cfg.heads
        s = self.store
        self.fut_in = Linear(s, "eval/fut/in", AGENT_FEAT_DIM, D, rng)
        s.register("eval/fut/pos", rng.normal(0.0, 0.02, size=(world.future_len, D)))
        self.fut_attn = AttentionBlock(s, "eval/fut/attn", D, H, rng)
        self.fut_ffn = FeedForwardBlock(s, "eval/fut/ffn", D, rng, cfg.ffn_mult)
        self.poly_enc = _PolylineEncoder(s, "eval/poly", D, rng)
        self.fusion = [
            (
                AttentionBlock(s, f"eval/fuse{i}/attn", D, H, rng),
                FeedForwardBlock(s, f"eval/fuse{i}/ffn", D, rng, cfg.ffn_mult),
            )
            for i in range(cfg.enc_layers)
        ]
        self.dec = [
            (
                AttentionBlock(s, f"eval/dec{i}/attn", D, H, rng, cross=True),
                FeedForwardBlock(s, f"eval/dec{i}/ffn", D, rng, cfg.ffn_mult),
            )
            for i in range(cfg.dec_layers)
        ]
        self.score_head = MLP(s, "eval/score", [D, D, 1], rng)
        self.recon_head = MLP(s, "eval/recon", [D, D, world.future_len * 4], rng)

    def forward(self, batch: EvalBatch):
        s = self.store
        B, N, T, _ = batch.fut_feats.shape
        h, c_in = self.fut_in.forward(s, batch.fut_feats)
        h = (h + s["eval/fut/pos"]).reshape(B * N, T, -1)
        h, c_attn = self.fut_attn.forward(s, h)
        h, c_ffn = self.fut_ffn.forward(s, h)
        agent_tok = h[:, -1, :].reshape(B, N, -1) * batch.agent_mask[..., None]

        map_tok, c_map = self.poly_enc.forward(s, batch.map_feats)
        map_tok = map_tok * batch.map_mask[..., None]
        route_tok, c_route = self.poly_enc.forward(s, batch.route_feats)
        route_tok = route_tok * batch.route_mask[..., None]

        tokens = np.concatenate([agent_tok, map_tok, route_tok], axis=1)
        emask = batch.element_mask()
        epose = batch.element_pose()
        erel = relative_pose_features(epose, epose)
        c_fuse = []
        for attn, ffn in self.fusion:
            tokens, ca = attn.forward(s, tokens, key_mask=emask, rel=erel)
            tokens, cf = ffn.forward(s, tokens)
            c_fuse.append((ca, cf))

        q = tokens[:, :1, :]
        qrel = relative_pose_features(epose[:, :1], epose)
        c_dec = []
        for attn, ffn in self.dec:
            q, ca = attn.forward(s, q, kv=tokens, key_mask=emask, rel=qrel)
            q, cf = ffn.forward(s, q)
            c_dec.append((ca, cf))
        feat = q[:, 0, :]
        score, c_score = self.score_head.forward(s, feat)
        recon, c_recon = self.recon_head.forward(s, feat)
        cache = (c_in, c_attn, c_ffn, c_map, c_route, c_fuse, c_dec, c_score, c_recon,
                 batch, (B, N, T), h.shape)
        return score[:, 0], recon.reshape(B, T, 4), cache

    def backward(self, cache, dscore: np.ndarray, drecon: np.ndarray, grads: dict):
        s = self.store
        (c_in, c_attn, c_ffn, c_map, c_route, c_fuse, c_dec, c_score, c_recon,
         batch, (B, N, T), h_shape) = cache
        dfeat = self.score_head.backward(s, c_score, dscore[:, None], grads)
        dfeat = dfeat + self.recon_head.backward(s, c_recon, drecon.reshape(B, -1), grads)
        dq = dfeat[:, None, :]
        dtokens = None
        for (attn, ffn), (ca, cf) in zip(reversed(self.dec), reversed(c_dec)):
            dq = ffn.backward(s, cf, dq, grads)
            dq, dkv = attn.backward(s, ca, dq, grads)
            dtokens = dkv if dtokens is None else dtokens + dkv
        dtokens[:, :1, :] += dq
        for (attn, ffn), (ca, cf) in zip(reversed(self.fusion), reversed(c_fuse)):
            dtokens = ffn.backward(s, cf, dtokens, grads)
            dtokens, _ = attn.backward(s, ca, dtokens, grads)
        M = batch.map_mask.shape[1]
        dagent = dtokens[:, :N] * batch.agent_mask[..., None]
        dmap = dtokens[:, N : N + M] * batch.map_mask[..., None]
        droute = dtokens[:, N + M :] * batch.route_mask[..., None]
        self.poly_enc.backward(s, c_map, dmap, grads)
        self.poly_enc.backward(s, c_route, droute, grads)
        dh = np.zeros(h_shape)
        dh[:, -1, :] = dagent.reshape(B * N, -1)
        dh = self.fut_ffn.backward(s, c_ffn, dh, grads)
        dh, _ = self.fut_attn.backward(s, c_attn, dh, grads)
        dh = dh.reshape(B, N, T, -1)
        grads["eval/fut/pos"] += dh.sum(axis=(0, 1))
        self.fut_in.backward(s, c_in, dh, grads)


def build_eval_batch(model: EvaluatorModel, scene: Scene, futures: list[np.ndarray]) -> EvalBatch:
    params = model.world
    sf = tensorize_scene(scene, params)
    fut_feats, fut_pose = [], []
    for fut in futures:
        fut = np.asarray(fut, dtype=float)
        if fut.shape[0] != len(scene.agents):
            raise ValidationError(
                f"future has {fut.shape[0]} agents, scene has {len(scene.agents)}"
            )
        ff, fp = tensorize_future(scene, fut, params)
        fut_feats.append(ff)
        fut_pose.append(fp)
    B = len(futures)
    return EvalBatch(
        fut_feats=np.stack(fut_feats),
        fut_pose=np.stack(fut_pose),
        agent_mask=np.tile(sf.agent_mask, (B, 1)),
        map_feats=np.tile(sf.map_feats, (B, 1, 1, 1)),
        map_mask=np.tile(sf.map_mask, (B, 1)),
        map_pose=np.tile(sf.map_pose, (B, 1, 1)),
        route_feats=np.tile(sf.route_feats, (B, 1, 1, 1)),
        route_mask=np.tile(sf.route_mask, (B, 1)),
        route_pose=np.tile(sf.route_pose, (B, 1, 1)),
    )


def score_scenes(model: EvaluatorModel, scene: Scene, futures: list[np.ndarray]) -> list[ScoredScene]:
    """Score each future independently against the same scene map."""
    if not futures:
        raise ValidationError("no futures to score")
    batch = build_eval_batch(model, scene, futures)
    scores, recons, _ = model.forward(batch)
    return [
        ScoredScene(future=np.asarray(futures[i]), score=float(scores[i]), recon=recons[i])
        for i in range(len(futures))
    ]


def select_best(model: EvaluatorModel, scene: Scene, futures: list[np.ndarray]) -> int:
    """Index of the highest-scoring future; exact ties resolve to the lowest index."""
    if not futures:
        raise ValidationError("select_best needs at least one future")
    scored = score_scenes(model, scene, futures)
    scores = np.array([s.score for s in scored])
    return int(np.argmax(scores))
