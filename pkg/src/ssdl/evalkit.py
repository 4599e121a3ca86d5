"""Verification metrics, TAR@FAR, rank-1 identification, and score-weighted
set aggregation.

TAR@FAR uses the conservative step convention: the operating threshold is the
largest one whose empirical FAR stays at or below the target, with no
interpolation. A pair is accepted (predicted same-identity) when its squared
distance is strictly below the threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .adapter import Adapter
from .core import ConfigurationError, Detection, DetectionStore, seeded_rng, sq_dist

__all__ = [
    "EvalBundle",
    "FaceSet",
    "MetricSnapshot",
    "SetIds",
    "aggregate_set",
    "build_calibration_pairs",
    "build_eval_bundle",
    "evaluate_bundle",
    "rank1_identification",
    "roc_table",
    "tar_at_far",
    "verification_accuracy",
]

DEFAULT_FAR_TARGETS = (0.001, 0.01, 0.1)


@dataclass(frozen=True)
class FaceSet:
    """One identity's media set."""

    label: int
    members: tuple[Detection, ...]

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("face set must be non-empty")


def aggregate_set(face_set: FaceSet, embed: Callable[[Detection], np.ndarray] | None = None) -> np.ndarray:
    """Score-weighted mean embedding; weights are normalised detection scores."""
    scores = np.array([d.score for d in face_set.members], dtype=np.float64)
    total = scores.sum()
    if total == 0.0:
        warnings.warn("all detection scores are zero; falling back to uniform weights")
        weights = np.full(len(scores), 1.0 / len(scores))
    else:
        weights = scores / total
    vecs = np.stack([embed(d) if embed is not None else d.embedding for d in face_set.members])
    return weights @ vecs


Pair = tuple[np.ndarray, np.ndarray, bool]


def _pair_distances(pairs: Sequence[Pair], embed) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise ConfigurationError("pair list must be non-empty")
    dists = np.empty(len(pairs))
    labels = np.empty(len(pairs), dtype=bool)
    for i, (a, b, same) in enumerate(pairs):
        if embed is not None:
            a, b = embed(a), embed(b)
        dists[i] = sq_dist(a, b)
        labels[i] = bool(same)
    return dists, labels


def verification_accuracy(pairs: Sequence[Pair], beta: float, embed=None) -> float:
    """Fraction of pairs where (sq_dist < beta) agrees with the label."""
    dists, labels = _pair_distances(pairs, embed)
    return float(np.mean((dists < beta) == labels))


def tar_at_far(pairs: Sequence[Pair], far_targets: Sequence[float], embed=None) -> list[float]:
    """TAR at the largest threshold keeping empirical FAR at or below each target."""
    dists, labels = _pair_distances(pairs, embed)
    neg = np.sort(dists[~labels])
    pos = dists[labels]
    if neg.size == 0:
        raise ConfigurationError("tar_at_far requires at least one negative pair")
    out = []
    for target in far_targets:
        if target < 1.0 / neg.size:
            warnings.warn(
                f"FAR target {target} below resolution 1/{neg.size}; using strictest threshold"
            )
        admit = int(np.floor(target * neg.size))
        threshold = neg[admit] if admit < neg.size else np.inf
        out.append(float(np.mean(pos < threshold)) if pos.size else 0.0)
    return out


def roc_table(pairs: Sequence[Pair], embed=None) -> list[tuple[float, float, float]]:
    """(threshold, TAR, FAR) at every distinct distance plus an accept-all row."""
    dists, labels = _pair_distances(pairs, embed)
    pos = dists[labels]
    neg = dists[~labels]
    rows = []
    thresholds = list(np.unique(dists)) + [float(np.max(dists)) * 2 + 1.0]
    for t in thresholds:
        tar = float(np.mean(pos < t)) if pos.size else 0.0
        far = float(np.mean(neg < t)) if neg.size else 0.0
        rows.append((float(t), tar, far))
    return rows


def rank1_identification(
    probes: Sequence[FaceSet], gallery: Sequence[FaceSet], embed=None
) -> float:
    """Fraction of probe sets whose nearest aggregated gallery set shares their label.

    Ties go to the lowest gallery index.
    """
    if not gallery:
        raise ConfigurationError("gallery must be non-empty")
    labels = [g.label for g in gallery]
    if len(set(labels)) != len(labels):
        raise ConfigurationError("gallery identities must be unique")
    if not probes:
        raise ConfigurationError("probe list must be non-empty")
    G = np.stack([aggregate_set(g, embed) for g in gallery])
    correct = 0
    for probe in probes:
        q = aggregate_set(probe, embed)
        diffs = G - q
        dists = np.einsum("nd,nd->n", diffs, diffs)
        nearest = int(np.argmin(dists))  # argmin returns the first (lowest) index on ties
        if labels[nearest] == probe.label:
            correct += 1
    return correct / len(probes)


@dataclass(frozen=True)
class MetricSnapshot:
    """Verification accuracy at beta, TAR at the FAR targets, rank-1 accuracy."""

    verification_accuracy: float
    tar_at_far: tuple[tuple[float, float], ...]  # ((far_target, tar), ...)
    rank1: float

    def __post_init__(self):
        values = [self.verification_accuracy, self.rank1] + [t for _, t in self.tar_at_far]
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise ConfigurationError(f"metric values must lie in [0, 1]: {values}")

    def to_dict(self) -> dict:
        return {
            "verification_accuracy": float(self.verification_accuracy),
            "tar_at_far": {repr(float(far)): float(tar) for far, tar in self.tar_at_far},
            "rank1": float(self.rank1),
        }

    def as_vector(self) -> list[float]:
        return [self.verification_accuracy, *(t for _, t in self.tar_at_far), self.rank1]


@dataclass(frozen=True)
class SetIds:
    label: int
    ids: tuple[int, ...]


@dataclass(frozen=True)
class EvalBundle:
    """Label-derived evaluation protocol over one store: fixed verification
    pairs plus probe/gallery splits. Built once and reused across snapshots."""

    pairs: tuple[tuple[int, int, bool], ...]
    gallery: tuple[SetIds, ...]
    probes: tuple[SetIds, ...]


def build_eval_bundle(
    store: DetectionStore,
    labels: Mapping[int, int],
    seed: int,
    n_pos: int = 500,
    n_neg: int = 2000,
) -> EvalBundle:
    """Sample a balanced-ish verification protocol and per-identity set splits.

    Positive pairs are drawn uniformly from all same-identity pairs, negative
    pairs uniformly from different-identity pairs. Each identity with at least
    two detections is split in id order: first half gallery, second half probe.
    """
    by_identity: dict[int, list[int]] = {}
    for det in store:
        if det.id not in labels:
            raise ConfigurationError(f"detection {det.id} missing from labels")
        by_identity.setdefault(labels[det.id], []).append(det.id)
    for ids in by_identity.values():
        ids.sort()
    identities = sorted(by_identity)
    if len(identities) < 2:
        raise ConfigurationError("eval bundle requires at least two identities")

    rng = seeded_rng(seed, stream=101)
    pos_pool = [
        (ids[i], ids[j])
        for ident in identities
        for ids in [by_identity[ident]]
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
    ]
    if not pos_pool:
        raise ConfigurationError("no same-identity pairs available")
    chosen = rng.integers(0, len(pos_pool), size=min(n_pos, len(pos_pool)) if n_pos else 0)
    pairs: list[tuple[int, int, bool]] = [(pos_pool[i][0], pos_pool[i][1], True) for i in chosen]

    all_ids = store.ids
    negatives = 0
    while negatives < n_neg:
        i, j = rng.integers(0, len(all_ids), size=2)
        a, b = all_ids[int(i)], all_ids[int(j)]
        if labels[a] != labels[b]:
            pairs.append((a, b, False))
            negatives += 1

    gallery: list[SetIds] = []
    probes: list[SetIds] = []
    for ident in identities:
        ids = by_identity[ident]
        if len(ids) < 2:
            continue
        half = len(ids) // 2
        gallery.append(SetIds(ident, tuple(ids[:half])))
        probes.append(SetIds(ident, tuple(ids[half:])))
    if not gallery:
        raise ConfigurationError("no identity has enough detections for a gallery/probe split")
    return EvalBundle(tuple(pairs), tuple(gallery), tuple(probes))


def build_calibration_pairs(
    store: DetectionStore,
    labels: Mapping[int, int],
    seed: int,
    n_pos: int = 500,
    n_neg: int = 500,
) -> list[Pair]:
    """Labeled raw-embedding pairs from a source store, for threshold calibration."""
    by_identity: dict[int, list[int]] = {}
    for det in store:
        if det.id not in labels:
            raise ConfigurationError(f"detection {det.id} missing from labels")
        by_identity.setdefault(labels[det.id], []).append(det.id)
    for ids in by_identity.values():
        ids.sort()
    if len(by_identity) < 2:
        raise ConfigurationError("calibration requires at least two identities")

    rng = seeded_rng(seed, stream=102)
    pos_pool = [
        (ids[i], ids[j])
        for ident in sorted(by_identity)
        for ids in [by_identity[ident]]
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
    ]
    if not pos_pool:
        raise ConfigurationError("no same-identity pairs available for calibration")
    pairs: list[Pair] = []
    for i in rng.integers(0, len(pos_pool), size=min(n_pos, len(pos_pool))):
        a, b = pos_pool[int(i)]
        pairs.append((store.by_id(a).embedding, store.by_id(b).embedding, True))
    all_ids = store.ids
    negatives = 0
    while negatives < n_neg:
        i, j = rng.integers(0, len(all_ids), size=2)
        a, b = all_ids[int(i)], all_ids[int(j)]
        if labels[a] != labels[b]:
            pairs.append((store.by_id(a).embedding, store.by_id(b).embedding, False))
            negatives += 1
    return pairs


def evaluate_bundle(
    store: DetectionStore,
    bundle: EvalBundle,
    adapter: Adapter,
    beta: float,
    far_targets: Sequence[float] = DEFAULT_FAR_TARGETS,
) -> MetricSnapshot:
    """Metric snapshot of the bundle under an adapter-transformed embedding space."""
    X = adapter.transform(store.embedding_matrix())
    embedded_pairs = [(X[store.row_of(a)], X[store.row_of(b)], same) for a, b, same in bundle.pairs]
    accuracy = verification_accuracy(embedded_pairs, beta)
    tars = tar_at_far(embedded_pairs, far_targets)

    embed = lambda det: X[store.row_of(det.id)]
    to_face_set = lambda s: FaceSet(s.label, tuple(store.by_id(i) for i in s.ids))
    rank1 = rank1_identification(
        [to_face_set(p) for p in bundle.probes],
        [to_face_set(g) for g in bundle.gallery],
        embed,
    )
    return MetricSnapshot(
        verification_accuracy=accuracy,
        tar_at_far=tuple((float(f), float(t)) for f, t in zip(far_targets, tars)),
        rank1=rank1,
    )
