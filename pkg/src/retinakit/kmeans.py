"""Deterministic Lloyd's k-means with k-means++ seeding and restarts.

Each restart runs on its own Philox substream keyed by (seed, restart
index), and the winner is the lexicographic minimum of (inertia, restart
index), so results are independent of restart execution order.  Inertia is
the sum of squared Euclidean distances from points to their assigned
centroids, and within a restart it never increases between iterations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientPointsError(ValueError):
    """Fewer distinct points than requested clusters."""


@dataclass(frozen=True)
class KMeansConfig:
    """Clustering parameters; tol is the relative inertia improvement."""

    k: int = 3
    restarts: int = 10
    max_iters: int = 300
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances, clipped against
    # cancellation in the expanded form
    sq = (
        (points ** 2).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids ** 2).sum(axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    for j in range(1, k):
        d2 = _squared_distances(points, centroids[:j]).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = points[rng.integers(n)]
            continue
        centroids[j] = points[rng.choice(n, p=d2 / total)]
    return centroids


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int, tol: float):
    n = points.shape[0]
    centroids = _plus_plus_init(points, k, rng)
    prev = None
    history: list[float] = []
    for it in range(max_iters):
        d2 = _squared_distances(points, centroids)
        assignments = d2.argmin(axis=1)
        dist = d2[np.arange(n), assignments]
        history.append(float(dist.sum()))
        converged = prev is not None and np.array_equal(assignments, prev)
        tol_met = len(history) >= 2 and history[-2] - history[-1] <= tol * history[-2]
        if converged or tol_met or it == max_iters - 1:
            break
        prev = assignments.copy()
        # re-seed empty clusters at the points farthest from their current
        # centroid; each relocated point becomes a singleton, which keeps
        # the inertia sequence non-increasing
        counts = np.bincount(assignments, minlength=k)
        dist = dist.copy()
        while (counts == 0).any():
            empty = int(np.nonzero(counts == 0)[0][0])
            farthest = int(dist.argmax())
            counts[assignments[farthest]] -= 1
            assignments[farthest] = empty
            counts[empty] += 1
            dist[farthest] = -np.inf
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, points)
        centroids = sums / counts[:, None]
    return assignments, centroids, history[-1], history


def kmeans(points: np.ndarray, config: KMeansConfig):
    """Cluster ``points`` (n, d); returns (assignments, centroids, inertia).

    Raises InsufficientPointsError when there are fewer than k distinct
    points.  Deterministic for a given config.
    """
    points = np.ascontiguousarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError(f"points must be 2-d (n, d), got shape {points.shape}")
    if len(np.unique(points, axis=0)) < config.k:
        raise InsufficientPointsError(
            f"need at least {config.k} distinct points, got {len(np.unique(points, axis=0))}"
        )
    best = None
    for restart in range(config.restarts):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((config.seed, restart)))
        )
        assignments, centroids, _, _ = _lloyd(
            points, config.k, rng, config.max_iters, config.tol
        )
        # direct form, so an exact fit reports an inertia of exactly 0
        inertia = float(((points - centroids[assignments]) ** 2).sum())
        if best is None or inertia < best[2]:
            best = (assignments, centroids, inertia)
    return best


def kmeans_inertia_history(points: np.ndarray, config: KMeansConfig) -> list[list[float]]:
    """Per-restart inertia traces (one list per restart), for diagnostics."""
    points = np.ascontiguousarray(points, dtype=float)
    traces = []
    for restart in range(config.restarts):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence((config.seed, restart)))
        )
        traces.append(_lloyd(points, config.k, rng, config.max_iters, config.tol)[3])
    return traces
