"""DBSCAN on scene embeddings and k-distance knee selection of eps."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

NOISE = -1


@dataclass
class ClusterLabels:
    labels: np.ndarray
    eps: float
    min_samples: int

    @property
    def num_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    @property
    def num_noise(self) -> int:
        return int(np.sum(self.labels == NOISE))


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2:
        raise ValueError("points must be an (N, d) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def dbscan(points, eps: float = 0.05, min_samples: int = 5) -> ClusterLabels:
    """Brute-force DBSCAN with inclusive ``eps`` and self-counting neighbourhoods.

    Clusters are numbered in scan order of their first core point; a border
    point reachable from several clusters joins the first one expanded.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    pts = _as_points(points)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterLabels(labels, eps, min_samples)
    within = pairwise_distances(pts) <= eps
    neighbours = [np.flatnonzero(row) for row in within]
    core = within.sum(axis=1) >= min_samples
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return ClusterLabels(labels, eps, min_samples)


def core_mask(points, eps: float, min_samples: int) -> np.ndarray:
    return (pairwise_distances(_as_points(points)) <= eps).sum(axis=1) >= min_samples


def k_distance(points, k: int) -> np.ndarray:
    """Ascending distances of every point to its k-th nearest other point."""
    pts = _as_points(points)
    if not 1 <= k < len(pts):
        raise ValueError(f"k must be in [1, {len(pts) - 1}] for {len(pts)} points, got {k}")
    dist = pairwise_distances(pts)
    np.fill_diagonal(dist, np.inf)
    return np.sort(np.partition(dist, k - 1, axis=1)[:, k - 1])


def knee(sorted_values) -> tuple[int, float]:
    """Index of the point farthest from the first-to-last chord, and that distance.

    Both axes are rescaled to [0, 1] first. A prominence below 1e-6 means the
    curve has no usable elbow. Ties go to the smaller index.
    """
    y = np.asarray(sorted_values, dtype=float)
    if len(y) < 3:
        raise ValueError("need at least 3 values to locate a knee")
    x = np.linspace(0.0, 1.0, len(y))
    span = y[-1] - y[0]
    yn = (y - y[0]) / span if span > 0 else np.zeros_like(y)
    # chord runs from (0, 0) to (1, 1) in normalized coordinates
    dist = np.abs(x - yn) / np.sqrt(2.0) if span > 0 else np.zeros_like(y)
    idx = int(np.argmax(dist))
    return idx, float(dist[idx])


def suggest_eps(sorted_kdist) -> float:
    idx, _ = knee(sorted_kdist)
    return float(np.asarray(sorted_kdist, dtype=float)[idx])
