"""Anchor-goal extraction: K-means over ego-frame future endpoints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..rng import make_rng
from ..world.scene import ScenarioLog, WorldParams
from ..diffusion.features import ego_frame, to_frame_xy

MIN_ANCHOR_SEPARATION = 0.1


@dataclass
class AnchorSet:
    anchors: np.ndarray  # [k, 2] ego-frame goal positions at the horizon
    source_hash: str

    def __post_init__(self):
        d = np.linalg.norm(self.anchors[:, None] - self.anchors[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.min() < MIN_ANCHOR_SEPARATION:
            raise ValidationError(
                f"anchor separation {d.min():.3f} m below {MIN_ANCHOR_SEPARATION} m"
            )


def kmeans(points: np.ndarray, k: int, seed: int, n_init: int = 10,
           max_iter: int = 100, tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Lloyd's algorithm with k-means++ seeding and restarts.

    Returns (centroids [k, d], within-cluster SSE); ties across restarts keep
    the first-best for determinism. Empty clusters are re-seeded from the
    point farthest from its centroid.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < k:
        raise ValidationError(f"k-means needs >= {k} points, got {n}")
    best: tuple[np.ndarray, float] | None = None
    for trial in range(n_init):
        rng = make_rng(seed, 300, trial)
        centroids = _kmeans_pp(points, k, rng)
        for _ in range(max_iter):
            d2 = ((points[:, None] - centroids[None]) ** 2).sum(axis=-1)
            assign = d2.argmin(axis=1)
            new_centroids = centroids.copy()
            for j in range(k):
                members = points[assign == j]
                if len(members):
                    new_centroids[j] = members.mean(axis=0)
                else:
                    new_centroids[j] = points[d2[np.arange(n), assign].argmax()]
            shift = np.linalg.norm(new_centroids - centroids, axis=1).max()
            centroids = new_centroids
            if shift < tol:
                break
        d2 = ((points[:, None] - centroids[None]) ** 2).sum(axis=-1)
        sse = float(d2.min(axis=1).sum())
        if best is None or sse < best[1] - 1e-12:
            best = (centroids, sse)
    return best


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None] - np.array(centroids)[None]) ** 2).sum(axis=-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centroids.append(points[rng.integers(n)])
            continue
        centroids.append(points[rng.choice(n, p=d2 / total)])
    return np.array(centroids)


def ego_endpoints(logs: list[ScenarioLog], params: WorldParams) -> np.ndarray:
    """Ego-frame (x, y) of the logged ego at the training horizon, one per log."""
    pts = []
    for log in logs:
        scene, fut = log.training_example(params)
        pts.append(to_frame_xy(fut[0, -1, :2], ego_frame(scene)))
    return np.array(pts)


def extract_anchors(logs: list[ScenarioLog], params: WorldParams, k: int = 32,
                    seed: int = 0, source_hash: str = "") -> AnchorSet:
    """Cluster logged ego endpoints into k anchor goals (ego frame)."""
    pts = ego_endpoints(logs, params)
    distinct = np.unique(np.round(pts, 9), axis=0)
    if distinct.shape[0] < k:
        raise ValidationError(
            f"only {distinct.shape[0]} distinct endpoints for {k} anchors"
        )
    for attempt in range(5):
        centroids, _ = kmeans(pts, k, seed + attempt * 1000)
        d = np.linalg.norm(centroids[:, None] - centroids[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.min() >= MIN_ANCHOR_SEPARATION:
            return AnchorSet(anchors=centroids, source_hash=source_hash)
    raise ValidationError("k-means produced centroids closer than the separation floor")
