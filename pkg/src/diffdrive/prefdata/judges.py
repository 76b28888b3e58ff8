"""Pairwise judges: deterministic oracle, external VLM client, human placeholder.

A judge inspects two candidate futures of the same scene and returns a
JudgeResult: a decision, a drop (tie), or pending (needs an external
labeler). The oracle is the reproducible desk-scale stand-in for a vision
language model.
"""

from __future__ import annotations

import json
import logging
import os
import time
from base64 import b64encode
from dataclasses import dataclass

import httpx
import numpy as np

from ..world.dynamics import fit_actions
from ..world.predicates import check_collision, check_offroad, progress_along_route
from ..world.scene import Scene

log = logging.getLogger(__name__)

PROMPT_VERSION = 1
PROMPT_TEMPLATE = (
    "You are ranking two candidate driving futures for the same scene. "
    "Prefer the future that stays on the road, avoids collisions, makes progress "
    "along the route, and drives smoothly. Respond with JSON: "
    '{"choice": "A" or "B", "rationale": "<one sentence>"}.'
)

# oracle score weights: collision-free, on-road, progress, accel cost, yaw cost
ORACLE_WEIGHTS = (1.0, 1.0, 0.5, 0.1, 0.1)
ORACLE_TIE_EPS = 1e-9


@dataclass
class Decision:
    choice: str  # "A" | "B"
    rationale: str


@dataclass
class JudgeResult:
    kind: str  # "decision" | "drop" | "pending"
    decision: Decision | None = None
    detail: str = ""


def oracle_score(scene: Scene, future: np.ndarray) -> float:
    """Fixed-weight quality score of one future from the ego's perspective."""
    w_col, w_road, w_prog, w_acc, w_yaw = ORACLE_WEIGHTS
    future = np.asarray(future, dtype=float)
    collided = check_collision(scene, future).any()
    offroad_flags, _ = check_offroad(scene, future[0])
    progress = progress_along_route(scene, future[0])
    ego_actions = fit_actions(scene.current_states()[:1], future[:1], scene.dt)[0]
    return float(
        w_col * (not collided)
        + w_road * (not offroad_flags.any())
        + w_prog * progress
        - w_acc * np.abs(ego_actions[:, 0]).mean()
        - w_yaw * np.abs(ego_actions[:, 1]).mean()
    )


class OracleJudge:
    name = "oracle"

    def decide(self, scene: Scene, future_a: np.ndarray, future_b: np.ndarray) -> JudgeResult:
        sa = oracle_score(scene, future_a)
        sb = oracle_score(scene, future_b)
        if abs(sa - sb) < ORACLE_TIE_EPS:
            return JudgeResult(kind="drop", detail="oracle tie")
        choice = "A" if sa > sb else "B"
        rationale = f"oracle score {max(sa, sb):.4f} vs {min(sa, sb):.4f}"
        return JudgeResult(kind="decision", decision=Decision(choice, rationale))


class HumanJudge:
    """Queues every ambiguous pair for the labeling service."""

    name = "human"

    def decide(self, scene, future_a, future_b) -> JudgeResult:
        return JudgeResult(kind="pending", detail="awaiting human label")


@dataclass
class VlmConfig:
    base_url: str = ""
    api_key_env: str = "VLM_API_KEY"
    model: str = ""
    timeout: float = 30.0
    images_enabled: bool = False
    max_attempts: int = 3
    backoff: float = 0.5


def describe_future(scene: Scene, future: np.ndarray) -> dict:
    """Structured text description sent to the VLM when images are disabled."""
    future = np.asarray(future, dtype=float)
    offroad_flags, _ = check_offroad(scene, future[0])
    col = check_collision(scene, future)
    gaps = []
    for i in range(1, len(scene.agents)):
        d = np.linalg.norm(future[0, :, :2] - future[i, :, :2], axis=1)
        gaps.append(float(d.min()))
    return {
        "ego_speeds": [round(float(v), 2) for v in future[0, :, 3]],
        "ego_end_xy": [round(float(future[0, -1, 0]), 2), round(float(future[0, -1, 1]), 2)],
        "progress": round(progress_along_route(scene, future[0]), 4),
        "offroad_steps": int(offroad_flags.sum()),
        "collides": bool(col.any()),
        "min_gap_m": round(min(gaps), 2) if gaps else None,
    }


class VlmJudgeClient:
    """HTTP client for an external pairwise-judgment endpoint.

    Sends a fixed, versioned prompt plus either two SVG renderings (base64) or
    structured text descriptions; expects {"choice": "A"|"B", "rationale": str}.
    Network or parse failures after retries leave the pair pending; the API
    key is read from the environment and never logged.
    """

    name = "vlm"

    def __init__(self, cfg: VlmConfig, transport: httpx.BaseTransport | None = None,
                 render_fn=None, sleep=time.sleep):
        self.cfg = cfg
        self.render_fn = render_fn
        self._sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=cfg.timeout)

    def build_request_body(self, scene: Scene, future_a: np.ndarray, future_b: np.ndarray) -> dict:
        if self.cfg.images_enabled and self.render_fn is not None:
            candidates = {
                "A": {"image_svg_b64": b64encode(self.render_fn(scene, future_a).encode()).decode()},
                "B": {"image_svg_b64": b64encode(self.render_fn(scene, future_b).encode()).decode()},
            }
        else:
            candidates = {
                "A": {"description": describe_future(scene, future_a)},
                "B": {"description": describe_future(scene, future_b)},
            }
        return {
            "model": self.cfg.model,
            "prompt_version": PROMPT_VERSION,
            "prompt": PROMPT_TEMPLATE,
            "candidates": candidates,
        }

    def decide(self, scene: Scene, future_a: np.ndarray, future_b: np.ndarray) -> JudgeResult:
        body = self.build_request_body(scene, future_a, future_b)
        headers = {}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last_detail = ""
        for attempt in range(self.cfg.max_attempts):
            if attempt:
                self._sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(
                    f"{self.cfg.base_url}/v1/judgments", json=body, headers=headers
                )
            except httpx.HTTPError as e:
                last_detail = f"transport error: {e.__class__.__name__}"
                continue
            if resp.status_code != 200:
                last_detail = f"status {resp.status_code}"
                continue
            try:
                doc = resp.json()
                choice = doc["choice"]
                if choice not in ("A", "B"):
                    raise ValueError(f"choice {choice!r}")
                return JudgeResult(
                    kind="decision",
                    decision=Decision(choice, str(doc.get("rationale", ""))),
                )
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                last_detail = f"malformed response: {e}"
                log.warning("vlm judge: malformed response (raw=%r)", resp.text[:500])
        return JudgeResult(kind="pending", detail=last_detail)
