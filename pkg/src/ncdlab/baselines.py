"""Reference clustering baselines: Lloyd k-means with k-means++ seeding, a
constrained (anchored) variant, and cluster-count estimation by sweeping the
number of extra clusters and scoring a held-out labeled probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .metrics import cluster_accuracy


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: tuple[float, ...]


def _dsq_to_nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    _, dists = kernels.assign_points(points, centroids)
    return dists


def _kmeanspp_seeds(points: np.ndarray, k: int, rng: np.random.Generator,
                    preset: np.ndarray | None = None) -> np.ndarray:
    """k-means++ D^2 seeding; ``preset`` rows are centroids already placed."""
    chosen = [] if preset is None else [c for c in preset]
    if not chosen:
        chosen.append(points[rng.integers(len(points))])
    while len(chosen) < k:
        d2 = _dsq_to_nearest(points, np.asarray(chosen))
        total = d2.sum()
        if total == 0.0:
            # all points coincide with a centroid; any remaining point works
            idx = rng.integers(len(points))
        else:
            idx = rng.choice(len(points), p=d2 / total)
        chosen.append(points[idx])
    return np.asarray(chosen, dtype=np.float64)


def _reseed_empty(points: np.ndarray, labels: np.ndarray, dists: np.ndarray,
                  centroids: np.ndarray, cluster_ids) -> None:
    """Move each empty cluster's centroid to the currently farthest point."""
    claimed = set()
    for c in cluster_ids:
        if np.any(labels == c):
            continue
        order = np.argsort(dists)[::-1]
        for idx in order:
            if idx not in claimed:
                break
        claimed.add(idx)
        centroids[c] = points[idx]
        labels[idx] = c
        dists[idx] = 0.0


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int,
           frozen_clusters: int = 0):
    """Lloyd iterations; the leading ``frozen_clusters`` centroids stay put."""
    k = len(centroids)
    labels = np.full(len(points), -1, dtype=np.int64)
    trace = []
    for _ in range(max_iter):
        new_labels, dists = kernels.assign_points(points, centroids)
        _reseed_empty(points, new_labels, dists, centroids,
                      range(frozen_clusters, k))
        trace.append(float(dists.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centroids)
        counts = np.zeros(k)
        np.add.at(sums, labels, points)
        np.add.at(counts, labels, 1.0)
        movable = counts > 0
        movable[:frozen_clusters] = False
        centroids[movable] = sums[movable] / counts[movable, None]
    final_labels, dists = kernels.assign_points(points, centroids)
    return final_labels, centroids, float(dists.sum()), tuple(trace)


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100,
           n_init: int = 10) -> KMeansResult:
    """Best of ``n_init`` Lloyd runs (lowest inertia), deterministic per seed."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if k < 1 or k > len(points):
        raise ValueError(f"k={k} must lie in [1, {len(points)}]")
    best: KMeansResult | None = None
    streams = np.random.SeedSequence(seed).spawn(n_init)
    for stream in streams:
        rng = np.random.default_rng(stream)
        centroids = _kmeanspp_seeds(points, k, rng)
        labels, centroids, inertia, trace = _lloyd(points, centroids, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, centroids, inertia, trace)
    return best


@dataclass(frozen=True)
class ConstrainedResult:
    free_labels: np.ndarray
    centroids: np.ndarray
    num_anchor_clusters: int


def constrained_kmeans(anchor_x: np.ndarray, anchor_y: np.ndarray,
                       free_x: np.ndarray, k: int, seed: int,
                       max_iter: int = 100, n_init: int = 10) -> ConstrainedResult:
    """k-means where clusters 0..A-1 are pinned at the anchor class means.

    Anchor points stay assigned to their class by construction (their
    centroid IS the class mean and never moves); the remaining k - A
    centroids are seeded D^2-style against the anchors and, together with
    all free points, update freely. Best of ``n_init`` restarts by
    free-point inertia.
    """
    anchor_x = np.ascontiguousarray(anchor_x, dtype=np.float64)
    free_x = np.ascontiguousarray(free_x, dtype=np.float64)
    classes = np.unique(anchor_y)
    if len(classes) == 0:
        raise ValueError("constrained_kmeans needs a non-empty anchor set")
    if k < len(classes):
        raise ValueError(f"k={k} smaller than the {len(classes)} anchor classes")
    anchor_clusters = np.searchsorted(classes, anchor_y)
    anchor_means = np.stack([anchor_x[anchor_clusters == c].mean(axis=0)
                             for c in range(len(classes))])

    if len(free_x) == 0:
        if k > len(classes):
            raise ValueError("free clusters requested but no free points given")
        return ConstrainedResult(np.empty(0, np.int64), anchor_means, len(classes))

    best = None
    best_inertia = np.inf
    for stream in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(stream)
        centroids = _kmeanspp_seeds(free_x, k, rng, preset=anchor_means)
        labels, centroids, inertia, _ = _lloyd(
            free_x, centroids, max_iter, frozen_clusters=len(classes)
        )
        if inertia < best_inertia:
            best = ConstrainedResult(labels, centroids, len(classes))
            best_inertia = inertia
    return best


def split_probe(labeled_x: np.ndarray, labeled_y: np.ndarray):
    """Split the labeled set by class: leading half anchors, rest is the probe.

    The probe classes float freely during clustering, standing in for novel
    structure whose ground truth is known. With a single labeled class there
    is nothing to hold out, so the probe reuses the anchor class.
    """
    classes = np.unique(labeled_y)
    n_anchor = max(len(classes) // 2, 1)
    anchor_mask = np.isin(labeled_y, classes[:n_anchor])
    if n_anchor == len(classes):
        return labeled_x, labeled_y, labeled_x, labeled_y
    return (labeled_x[anchor_mask], labeled_y[anchor_mask],
            labeled_x[~anchor_mask], labeled_y[~anchor_mask])


def mean_silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Plain mean silhouette of a partition (clusters of size 1 score 0)."""
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        return 0.0
    d = np.sqrt(np.maximum(
        (points * points).sum(1)[:, None] + (points * points).sum(1)[None, :]
        - 2.0 * points @ points.T, 0.0))
    members = {c: labels == c for c in clusters}
    sizes = {c: int(m.sum()) for c, m in members.items()}
    scores = np.zeros(len(points))
    for c in clusters:
        own = members[c]
        if sizes[c] < 2:
            continue
        a = d[own][:, own].sum(axis=1) / (sizes[c] - 1)
        b = np.full(sizes[c], np.inf)
        for other in clusters:
            if other == c:
                continue
            b = np.minimum(b, d[own][:, members[other]].mean(axis=1))
        scores[own] = (b - a) / np.maximum(a, b)
    return float(scores.mean())


def candidate_scores(labeled_x: np.ndarray, labeled_y: np.ndarray,
                     unlabeled_x: np.ndarray, k_candidates, seed: int,
                     ) -> list[tuple[int, float, float]]:
    """(candidate, probe accuracy, unlabeled silhouette) per candidate count.

    For candidate c, constrained k-means runs over probe + unlabeled points
    with k = anchor classes + probe classes + c, anchoring only the
    anchor-class samples. The probe's Hungarian cluster accuracy validates
    against held-out ground truth; the silhouette over all free points
    grades the partition (it sees merges and splits the probe alone cannot).
    """
    k_candidates = sorted(set(int(k) for k in k_candidates))
    if not k_candidates:
        raise ValueError("need at least one candidate cluster count")
    if min(k_candidates) < 1:
        raise ValueError("candidate cluster counts must be positive")
    anchor_x, anchor_y, probe_x, probe_y = split_probe(labeled_x, labeled_y)
    free_x = np.concatenate([probe_x, unlabeled_x])
    n_probe_classes = len(np.unique(probe_y))
    scores = []
    for candidate in k_candidates:
        k = len(np.unique(anchor_y)) + n_probe_classes + candidate
        result = constrained_kmeans(anchor_x, anchor_y, free_x, k,
                                    seed=int(np.random.SeedSequence([seed, candidate])
                                             .generate_state(1)[0]))
        probe_acc = cluster_accuracy(result.free_labels[: len(probe_x)], probe_y)
        sil = mean_silhouette(free_x, result.free_labels)
        scores.append((candidate, probe_acc, sil))
    return scores


PROBE_PLATEAU = 0.05


def pick_estimate(scores: list[tuple[int, float, float]]) -> int:
    """Best unlabeled silhouette among candidates whose probe accuracy sits
    within PROBE_PLATEAU of the maximum; ties go to the smaller count."""
    scores = sorted(scores)
    top_acc = max(acc for _, acc, _ in scores)
    best_k, best_sil = None, -np.inf
    for candidate, acc, sil in scores:
        if acc >= top_acc - PROBE_PLATEAU and sil > best_sil:
            best_k, best_sil = candidate, sil
    return best_k


def estimate_num_classes(labeled_x: np.ndarray, labeled_y: np.ndarray,
                         unlabeled_x: np.ndarray, k_candidates, seed: int) -> int:
    """Estimate how many novel clusters the unlabeled set contains."""
    return pick_estimate(candidate_scores(
        labeled_x, labeled_y, unlabeled_x, k_candidates, seed
    ))
