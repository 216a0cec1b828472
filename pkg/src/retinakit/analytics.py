"""Kernel-population analysis: normalization, clustering, labeling.

Kernel sets are min-max normalized, flattened row-major and clustered
with k-means (k=3). Clusters are then identified against canonical
center-surround templates by Pearson correlation, giving each cluster
an on-center, off-center or other label together with its deciding
score, plus per-cluster proportions and averages.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .dog import DoGSpec, Polarity, generate_kernel
from .kmeans import KMeansConfig, kmeans

TEMPLATE_GAMMA = 0.4
CORRELATION_FLOOR = 0.5
AMBIGUITY_TOL = 1e-9


class ClusterLabel(enum.Enum):
    """Identity of a cluster relative to the canonical templates."""

    ON_CENTER = "on"
    OFF_CENTER = "off"
    OTHER = "other"


class AmbiguousLabelingError(ValueError):
    """Two label assignments tie on the deciding correlations."""


@dataclass(frozen=True)
class KernelSet:
    """A stack of same-size square kernels plus a source tag."""

    kernels: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        stack = np.asarray(self.kernels, dtype=float)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
            raise ValueError(f"kernels must stack to (n, size, size), got {stack.shape}")
        if stack.shape[0] == 0:
            raise ValueError("kernel set is empty")
        if stack.shape[1] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {stack.shape[1]}")
        if not np.isfinite(stack).all():
            raise ValueError("kernels contain non-finite values")
        object.__setattr__(self, "kernels", stack)

    @property
    def size(self) -> int:
        return int(self.kernels.shape[1])

    def __len__(self) -> int:
        return int(self.kernels.shape[0])


@dataclass(frozen=True)
class ClusterReport:
    """Result of one analysis run; cluster index is the array axis."""

    source: str
    kernel_size: int
    assignments: np.ndarray
    centroids: np.ndarray
    cluster_averages: np.ndarray
    labels: tuple[ClusterLabel, ...]
    label_scores: tuple[float, ...]
    proportions: tuple[float, ...]
    inertia: float

    def proportion_of(self, label: ClusterLabel) -> float:
        return self.proportions[self.labels.index(label)]


def min_max_encode(kernel: np.ndarray) -> np.ndarray:
    """Affine-map ``kernel`` onto [0, 1]; a constant kernel maps to all 0.5."""
    w = np.asarray(kernel, dtype=float)
    if not np.isfinite(w).all():
        raise ValueError("kernel contains non-finite values")
    lo = w.min()
    hi = w.max()
    if hi == lo:
        return np.full_like(w, 0.5)
    return (w - lo) / (hi - lo)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation, defined as 0 when either side has zero variance."""
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0
    return float(np.clip((da * db).sum() / denom, -1.0, 1.0))


def _templates(size: int) -> tuple[np.ndarray, np.ndarray]:
    on = generate_kernel(DoGSpec(size=size, gamma=TEMPLATE_GAMMA, polarity=Polarity.ON))
    off = generate_kernel(DoGSpec(size=size, gamma=TEMPLATE_GAMMA, polarity=Polarity.OFF))
    return min_max_encode(on).ravel(), min_max_encode(off).ravel()


def label_clusters(
    centroids: np.ndarray, size: int
) -> tuple[tuple[ClusterLabel, ...], tuple[float, ...]]:
    """Assign on/off/other labels to three centroids, one label each.

    Every one-to-one assignment is scored by the sum of its labeled
    slots' correlations (on cluster against the on template plus off
    cluster against the off template; the leftover cluster is other).
    Assignments whose on and off correlations clear the +0.5 floor are
    preferred; when none does, the best unconstrained assignment is
    used so that exactly one of each label is always emitted. A tie
    within 1e-9 between the two leading assignments is ambiguous and
    raises.
    """
    pts = np.asarray(centroids, dtype=float)
    if pts.shape != (3, size * size):
        raise ValueError(f"expected 3 centroids of dimension {size * size}, got {pts.shape}")
    on_t, off_t = _templates(size)
    on_corr = np.array([_pearson(p, on_t) for p in pts])
    off_corr = np.array([_pearson(p, off_t) for p in pts])
    best_corr = np.maximum(on_corr, off_corr)

    def total(perm: tuple[int, int, int]) -> float:
        # the other slot scores nothing here: it correlates equally well
        # with either template mirrored, so counting it would make every
        # off/other swap a structural tie
        return float(on_corr[perm[0]] + off_corr[perm[1]])

    candidates = list(permutations(range(3)))
    feasible = [
        p
        for p in candidates
        if on_corr[p[0]] >= CORRELATION_FLOOR and off_corr[p[1]] >= CORRELATION_FLOOR
    ]
    pool = feasible if feasible else candidates
    ranked = sorted(pool, key=total, reverse=True)
    if len(ranked) > 1 and total(ranked[0]) - total(ranked[1]) < AMBIGUITY_TOL:
        raise AmbiguousLabelingError(
            "two label assignments tie within 1e-9 on the deciding correlation"
        )
    on_c, off_c, other_c = ranked[0]
    labels: list[ClusterLabel] = [ClusterLabel.OTHER] * 3
    scores = [0.0] * 3
    labels[on_c] = ClusterLabel.ON_CENTER
    scores[on_c] = float(on_corr[on_c])
    labels[off_c] = ClusterLabel.OFF_CENTER
    scores[off_c] = float(off_corr[off_c])
    scores[other_c] = float(best_corr[other_c])
    return tuple(labels), tuple(scores)


def analyze(kernel_set: KernelSet, config: KMeansConfig | None = None) -> ClusterReport:
    """Run the full pipeline: encode, flatten, cluster, label, summarize."""
    if config is None:
        config = KMeansConfig()
    if config.k != 3:
        raise ValueError(f"analysis requires k=3 (one cluster per label), got k={config.k}")
    encoded = np.stack([min_max_encode(k) for k in kernel_set.kernels])
    points = encoded.reshape(len(kernel_set), -1)
    # cluster in canonical (lexicographic) point order so that permuting
    # the input kernels permutes assignments and changes nothing else
    order = np.lexsort(points.T[::-1])
    sorted_assignments, centroids, inertia = kmeans(points[order], config)
    assignments = np.empty(len(kernel_set), dtype=np.int64)
    assignments[order] = sorted_assignments
    labels, scores = label_clusters(centroids, kernel_set.size)
    counts = np.bincount(assignments, minlength=3)
    proportions = tuple(float(c) / len(kernel_set) for c in counts)
    size = kernel_set.size
    averages = np.empty((3, size, size))
    for c in range(3):
        if counts[c]:
            averages[c] = encoded[assignments == c].mean(axis=0)
        else:
            averages[c] = centroids[c].reshape(size, size)
    return ClusterReport(
        source=kernel_set.source,
        kernel_size=size,
        assignments=assignments,
        centroids=centroids,
        cluster_averages=averages,
        labels=labels,
        label_scores=scores,
        proportions=proportions,
        inertia=float(inertia),
    )


def proportion_table(
    reports: list[tuple[str, ClusterReport]],
) -> list[tuple[str, float, float, float]]:
    """Rows of (model_tag, on, off, other) proportions, one per report."""
    if not reports:
        raise ValueError("no reports given")
    return [
        (
            tag,
            report.proportion_of(ClusterLabel.ON_CENTER),
            report.proportion_of(ClusterLabel.OFF_CENTER),
            report.proportion_of(ClusterLabel.OTHER),
        )
        for tag, report in reports
    ]
