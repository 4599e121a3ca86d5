"""Margin-based confident clustering over per-frame detection pools.

Frames are consumed in order. Within a frame, each existing cluster (in
creation order) picks its nearest remaining detection and absorbs it only
if the squared distance to the current center is below the cluster radius
beta/2 - gamma/2. Detections left over seed new clusters. A cluster can
therefore gain at most one detection per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import ConfigurationError, DetectionStore, MarginSet, sq_dist

__all__ = [
    "Absorption",
    "Cluster",
    "ClusterSet",
    "PairClass",
    "classify_pair",
    "cluster_radius",
    "confident_cluster",
    "filter_salient",
]


@dataclass
class Absorption:
    """Audit record of one absorption: distance vs the center in force at that moment."""

    detection_id: int
    cluster_label: int
    sq_distance: float
    radius: float
    center: np.ndarray


@dataclass
class Cluster:
    label: int
    member_ids: list[int]
    center: np.ndarray

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    assignment: dict[int, int]
    absorptions: list[Absorption] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def is_empty(self) -> bool:
        return not self.clusters

    def sizes(self) -> list[int]:
        return [c.size for c in self.clusters]


def cluster_radius(margins: MarginSet) -> float:
    """beta/2 - gamma/2, in squared-distance units."""
    if margins.beta is None:
        raise ConfigurationError("cluster radius requires a calibrated beta")
    radius = margins.beta / 2.0 - margins.gamma / 2.0
    if radius <= 0:
        raise ConfigurationError(f"non-positive cluster radius: beta={margins.beta}, gamma={margins.gamma}")
    return radius


def confident_cluster(store: DetectionStore, margins: MarginSet) -> ClusterSet:
    """Cluster a store into pseudo-identities; returns clusters plus an absorption log."""
    if len(store) == 0:
        raise ConfigurationError("cannot cluster an empty store")
    radius = cluster_radius(margins)

    clusters: list[Cluster] = []
    members: list[list[np.ndarray]] = []  # raw member embeddings per cluster, insertion order
    absorptions: list[Absorption] = []

    for frame in store.frames:
        pool = list(frame)
        for c in clusters:
            if not pool:
                break
            best = None
            best_d = np.inf
            for det in pool:
                d = sq_dist(det.embedding, c.center)
                if d < best_d or (d == best_d and best is not None and det.id < best.id):
                    best, best_d = det, d
            if best_d < radius:
                absorptions.append(
                    Absorption(best.id, c.label, best_d, radius, np.array(c.center, copy=True))
                )
                c.member_ids.append(best.id)
                members[c.label].append(best.embedding)
                # exact mean of current members, not an incremental update
                c.center = np.mean(np.stack(members[c.label]), axis=0)
                pool.remove(best)
        for det in pool:
            clusters.append(Cluster(len(clusters), [det.id], np.array(det.embedding, copy=True)))
            members.append([det.embedding])

    assignment = {det_id: c.label for c in clusters for det_id in c.member_ids}
    return ClusterSet(clusters, assignment, absorptions)


def filter_salient(clusters: ClusterSet, min_size: int) -> ClusterSet:
    """Keep clusters with at least ``min_size`` members, relabelled contiguously from 0.

    Returns an empty ClusterSet when nothing survives; the caller decides how
    to degrade.
    """
    if min_size < 1:
        raise ConfigurationError(f"min_size must be >= 1, got {min_size}")
    kept = [c for c in clusters.clusters if c.size >= min_size]
    relabelled = [Cluster(i, list(c.member_ids), np.array(c.center, copy=True)) for i, c in enumerate(kept)]
    assignment = {det_id: c.label for c in relabelled for det_id in c.member_ids}
    return ClusterSet(relabelled, assignment, list(clusters.absorptions))


class PairClass(Enum):
    STRONG_POSITIVE = "strong-positive"
    UNCERTAIN = "uncertain"
    STRONG_NEGATIVE = "strong-negative"


def classify_pair(a, b, margins: MarginSet) -> PairClass:
    """Same-identity confidence for one pair: below beta-gamma, above beta+gamma, or in between."""
    if margins.beta is None:
        raise ConfigurationError("classify_pair requires a calibrated beta")
    d = sq_dist(a, b)
    if d < margins.beta - margins.gamma:
        return PairClass.STRONG_POSITIVE
    if d > margins.beta + margins.gamma:
        return PairClass.STRONG_NEGATIVE
    return PairClass.UNCERTAIN
