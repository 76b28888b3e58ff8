"""2D geometry primitives: angle wrapping, oriented rectangles, polylines."""

from __future__ import annotations

import numpy as np


def wrap_angle(theta):
    """Wrap angles to the half-open interval (-pi, pi]."""
    t = np.asarray(theta, dtype=float)
    wrapped = t - 2.0 * np.pi * np.round(t / (2.0 * np.pi))
    # fold -pi onto +pi so the interval is half-open
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def rect_corners(x, y, heading, length, width):
    """Corners of an oriented rectangle, counter-clockwise, shape [..., 4, 2]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)
    corners = np.einsum("...ij,kj->...ki", rot, local)
    corners[..., 0] += x[..., None]
    corners[..., 1] += y[..., None]
    return corners


def rects_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two rectangles given as [4, 2] corner arrays.

    Touching rectangles (shared edge or corner) count as non-overlapping.
    """
    for quad in (corners_a, corners_b):
        edges = np.roll(quad, -1, axis=0) - quad
        for edge in edges[:2]:  # two distinct edge directions per rectangle
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


class PolylineChain:
    """A polyline as a chain of segments with arc-length projection."""

    def __init__(self, waypoints: np.ndarray):
        pts = np.asarray(waypoints, dtype=float)[:, :2]
        if pts.shape[0] < 2:
            raise ValueError("polyline chain needs at least 2 waypoints")
        self.points = pts
        self._a = pts[:-1]
        self._ab = pts[1:] - pts[:-1]
        self.seg_len = np.linalg.norm(self._ab, axis=1)
        self._denom = np.maximum(self.seg_len**2, 1e-18)
        self.cum_len = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum_len[-1])

    def project_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project points [n, 2] onto the chain.

        Returns (arc_lengths [n], distances [n]); distance ties resolve to the
        smallest arc-length (first segment attaining the minimum).
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        rel = p[:, None, :] - self._a[None, :, :]
        t = np.clip(np.einsum("nsk,sk->ns", rel, self._ab) / self._denom, 0.0, 1.0)
        closest = self._a[None] + t[..., None] * self._ab[None]
        d = np.linalg.norm(p[:, None, :] - closest, axis=-1)
        dmin = d.min(axis=1)
        first = np.argmax(d <= (dmin + 1e-12)[:, None], axis=1)
        s = self.cum_len[first] + t[np.arange(len(p)), first] * self.seg_len[first]
        return s, dmin

    def project(self, point: np.ndarray) -> tuple[float, float]:
        s, d = self.project_many(np.asarray(point, dtype=float)[None, :])
        return float(s[0]), float(d[0])

    def distance_many(self, points: np.ndarray) -> np.ndarray:
        return self.project_many(points)[1]

    def pose_at(self, s: float) -> np.ndarray:
        """Interpolated (x, y, heading) at arc length s, clamped to the chain."""
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.clip(np.searchsorted(self.cum_len, s, side="right") - 1, 0, len(self.seg_len) - 1))
        t = (s - self.cum_len[i]) / max(self.seg_len[i], 1e-12)
        xy = self.points[i] + t * (self.points[i + 1] - self.points[i])
        d = self.points[i + 1] - self.points[i]
        return np.array([xy[0], xy[1], np.arctan2(d[1], d[0])])


def min_distance_to_polylines(points: np.ndarray, chains: list[PolylineChain]) -> np.ndarray:
    """Per-point minimum distance to any chain; points [n, 2] -> [n]."""
    return np.min(np.stack([c.distance_many(points) for c in chains], axis=0), axis=0)


def resample_polyline(waypoints: np.ndarray, n_points: int) -> np.ndarray:
    """Resample an (x, y, heading) polyline to n evenly spaced waypoints by arc length."""
    chain = PolylineChain(np.asarray(waypoints, dtype=float))
    s = np.linspace(0.0, chain.length, n_points)
    seg_idx = np.clip(np.searchsorted(chain.cum_len, s, side="right") - 1, 0, len(chain.seg_len) - 1)
    t = (s - chain.cum_len[seg_idx]) / np.maximum(chain.seg_len[seg_idx], 1e-12)
    xy = chain.points[seg_idx] + t[:, None] * (chain.points[seg_idx + 1] - chain.points[seg_idx])
    d = chain.points[seg_idx + 1] - chain.points[seg_idx]
    heading = np.arctan2(d[:, 1], d[:, 0])
    return np.column_stack([xy, heading])
