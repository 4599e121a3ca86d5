"""Seeded synthetic source/target embedding generator with a controllable
domain shift.

Identity centroids are drawn inside a spherical cap (all unit vectors), so
impostor pairs span the easy-to-confusable range — the kind of population a
single-demographic benchmark presents. The target store is the source store
pushed through a rigid shift (rotation in a seeded random 2-plane plus a
translation) with extra per-detection noise whose scale grows as the
detection score drops: low-score observations are the unstable ones.

With a zero-angle, zero-norm, zero-noise shift the target store is
bit-identical to the source store.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, Detection, DetectionStore, seeded_rng

__all__ = ["SynthSpec", "generate_source", "generate_target", "noise_scale"]

# Identity centroids are drawn inside a spherical cap of this concentration,
# subject to a minimum pairwise squared chord distance. The crowding makes
# impostor pairs span the easy-to-confusable range while the floor keeps
# identities distinct at the scale the mining margins operate on.
IDENTITY_SPREAD = 0.6
MIN_CENTROID_GAP_SQ = 0.3

_STREAM_CENTROIDS = 1
_STREAM_SOURCE = 2
_STREAM_SHIFT = 3
_STREAM_TARGET_NOISE = 4


@dataclass(frozen=True)
class SynthSpec:
    identities: int
    detections_per_identity: int
    dimension: int
    intra_class_sigma: float
    shift_rotation_angle: float = 0.0
    shift_translation_norm: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.identities < 2:
            raise ConfigurationError(f"identities must be >= 2, got {self.identities}")
        if self.detections_per_identity < 1:
            raise ConfigurationError(
                f"detections_per_identity must be >= 1, got {self.detections_per_identity}"
            )
        if self.dimension < 2:
            raise ConfigurationError(f"dimension must be >= 2, got {self.dimension}")
        if not (math.isfinite(self.intra_class_sigma) and self.intra_class_sigma > 0):
            raise ConfigurationError(f"intra_class_sigma must be finite and > 0, got {self.intra_class_sigma}")
        for name in ("shift_rotation_angle", "shift_translation_norm", "noise_sigma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value}")
        if self.noise_sigma < 0 or self.shift_translation_norm < 0:
            raise ConfigurationError("noise_sigma and shift_translation_norm must be >= 0")


def noise_scale(score: float) -> float:
    """Target noise multiplier per detection: 0 at score 1, 1 at score 0.5."""
    return 2.0 * (1.0 - score)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigurationError("degenerate zero vector while sampling directions")
    return vec / norm


def _centroids(spec: SynthSpec) -> np.ndarray:
    rng = seeded_rng(spec.seed, _STREAM_CENTROIDS)
    mean_dir = _unit(rng.standard_normal(spec.dimension))
    accepted: list[np.ndarray] = []
    spread = IDENTITY_SPREAD
    attempts = 0
    while len(accepted) < spec.identities:
        candidate = _unit(mean_dir + spread * _unit(rng.standard_normal(spec.dimension)))
        attempts += 1
        gaps = [float(np.sum((candidate - c) ** 2)) for c in accepted]
        if not gaps or min(gaps) >= MIN_CENTROID_GAP_SQ:
            accepted.append(candidate)
        elif attempts > 200 * spec.identities:
            # cap too crowded for the requested count: widen it and keep going
            spread *= 1.25
            attempts = 0
    return np.stack(accepted)


def generate_source(spec: SynthSpec) -> tuple[DetectionStore, dict[int, int]]:
    """K unit-norm identity centroids; detections are centroid plus isotropic
    noise, assigned round-robin so every frame mixes identities.

    Returns the store plus ground-truth labels (detection id -> identity),
    which must never reach the training pipeline.
    """
    centroids = _centroids(spec)
    rng = seeded_rng(spec.seed, _STREAM_SOURCE)
    k, per, dim = spec.identities, spec.detections_per_identity, spec.dimension

    scores = rng.uniform(0.5, 1.0, size=(per, k))
    noise = rng.standard_normal((per, k, dim)) * spec.intra_class_sigma

    detections: list[Detection] = []
    labels: dict[int, int] = {}
    det_id = 0
    for j in range(per):  # frame j holds one detection of every identity
        for ident in range(k):
            emb = centroids[ident] + noise[j, ident]
            detections.append(Detection(det_id, j, float(scores[j, ident]), emb))
            labels[det_id] = ident
            det_id += 1
    return DetectionStore(detections), labels


def _rotation_plane(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    u = _unit(rng.standard_normal(dim))
    v = rng.standard_normal(dim)
    v = v - np.dot(v, u) * u
    return u, _unit(v)


def generate_target(
    spec: SynthSpec,
    source: DetectionStore | None = None,
    source_labels: dict[int, int] | None = None,
) -> tuple[DetectionStore, dict[int, int]]:
    """Map the source store through the domain shift.

    Every source detection is rotated by ``shift_rotation_angle`` in a seeded
    random 2-plane, translated by a seeded direction scaled to
    ``shift_translation_norm``, and perturbed by Gaussian noise of scale
    ``noise_sigma * noise_scale(score)``. Frames, ids and scores carry over;
    the returned labels are for evaluation only.
    """
    if source is None or source_labels is None:
        source, source_labels = generate_source(spec)

    shift_rng = seeded_rng(spec.seed, _STREAM_SHIFT)
    u, v = _rotation_plane(shift_rng, spec.dimension)
    translation = _unit(shift_rng.standard_normal(spec.dimension)) * spec.shift_translation_norm
    noise_rng = seeded_rng(spec.seed, _STREAM_TARGET_NOISE)

    theta = spec.shift_rotation_angle
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    detections: list[Detection] = []
    labels: dict[int, int] = {}
    for det in source:
        emb = np.array(det.embedding, copy=True)
        if theta != 0.0:
            p = float(np.dot(emb, u))
            q = float(np.dot(emb, v))
            emb = emb - p * u - q * v + (p * cos_t - q * sin_t) * u + (p * sin_t + q * cos_t) * v
        if spec.shift_translation_norm != 0.0:
            emb = emb + translation
        eps = noise_rng.standard_normal(spec.dimension)
        sigma = spec.noise_sigma * noise_scale(det.score)
        if sigma != 0.0:
            emb = emb + sigma * eps
        detections.append(Detection(det.id, det.frame, det.score, emb))
        labels[det.id] = source_labels[det.id]
    return DetectionStore(detections), labels
