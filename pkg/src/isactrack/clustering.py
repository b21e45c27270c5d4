"""Density-based filtering of raw detections.

Estimation error scatters repeated detections of a real person inside a
small disc over consecutive intervals, while ghost reflections appear for a
few frames and vanish.  Clustering the recent detection history therefore
keeps dense clusters (real targets) and drops sparse noise (ghosts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Detection

NOISE = -1
_UNVISITED = -2


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Label 2D points by density connectivity.

    Standard definitions: a core point has at least ``min_pts`` points
    (itself included) within distance ``eps`` inclusive; clusters grow from
    core points through their neighbourhoods; non-core points reachable from
    a core join its cluster as border points; the rest are labelled -1.

    Deterministic by construction: cluster seeds are tried in input order
    and neighbourhoods expand in input order, so cluster ids depend only on
    the point order, not on hashing or randomness.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an (n, 2) array")
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    n = len(points)
    labels = np.full(n, _UNVISITED, dtype=int)
    if n == 0:
        return labels

    diff = points[:, None, :] - points[None, :, :]
    within = np.einsum("ijk,ijk->ij", diff, diff) <= eps * eps
    neighbor_lists = [np.nonzero(within[i])[0] for i in range(n)]
    is_core = np.array([len(nb) >= min_pts for nb in neighbor_lists])

    cluster = 0
    for seed in range(n):
        if labels[seed] != _UNVISITED or not is_core[seed]:
            continue
        labels[seed] = cluster
        queue = list(neighbor_lists[seed])
        head = 0
        while head < len(queue):
            i = queue[head]
            head += 1
            if labels[i] != _UNVISITED:
                continue
            labels[i] = cluster
            if is_core[i]:
                queue.extend(neighbor_lists[i])
        cluster += 1

    labels[labels == _UNVISITED] = NOISE
    return labels


@dataclass
class ClusterResult:
    labels: np.ndarray
    centroids: list[np.ndarray]          # one per cluster id, in id order
    members: list[np.ndarray]            # indices per cluster id

    @property
    def noise_indices(self) -> np.ndarray:
        return np.nonzero(self.labels == NOISE)[0]


def cluster_points(points: np.ndarray, eps: float, min_pts: int) -> ClusterResult:
    labels = dbscan(points, eps, min_pts)
    centroids = []
    members = []
    for cid in range(labels.max() + 1 if len(labels) else 0):
        idx = np.nonzero(labels == cid)[0]
        members.append(idx)
        centroids.append(points[idx].mean(axis=0))
    return ClusterResult(labels=labels, centroids=centroids, members=members)


@dataclass
class DetectionWindow:
    """Sliding store of the detections from the last ``window_frames``.

    ``push`` adds one interval's detections; ``prune`` drops everything older
    than ``window_frames`` behind the given frame (a detection at frame f
    stays while f > current - window_frames).
    """

    window_frames: int
    detections: list[Detection] = field(default_factory=list)

    def push(self, detections: list[Detection]) -> None:
        self.detections.extend(detections)

    def prune(self, current_frame: int) -> None:
        cutoff = current_frame - self.window_frames
        self.detections = [d for d in self.detections if d.frame > cutoff]


def extract_targets(
    window: DetectionWindow, eps: float, min_pts: int
) -> list[Detection]:
    """Collapse the windowed detections into at most one point per target.

    Runs density clustering over all detections currently in the window and
    emits each cluster's centroid, stamped with the newest frame present in
    the window.  Noise points (ghosts too short-lived to form a cluster) are
    discarded.  Returns an empty list when nothing clusters.
    """
    if not window.detections:
        return []
    points = np.stack([d.position_m for d in window.detections])
    result = cluster_points(points, eps, min_pts)
    newest = max(d.frame for d in window.detections)
    return [
        Detection(position_m=c.copy(), frame=newest, source=None)
        for c in result.centroids
    ]
