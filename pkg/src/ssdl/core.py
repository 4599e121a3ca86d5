"""Shared domain types, squared-distance math, and run configuration.

Every margin comparison in this package (alpha, gamma, beta, cluster radius)
is expressed in squared Euclidean distance units. No module uses unsquared
distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ConfigurationError",
    "Detection",
    "DetectionStore",
    "MarginSet",
    "SsdlConfig",
    "as_embedding",
    "default_config",
    "seeded_rng",
    "sq_dist",
]


class ConfigurationError(ValueError):
    """Invalid input data, configuration, or file content."""


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Validate and freeze a 1-D float64 embedding vector."""
    vec = np.array(values, dtype=np.float64, copy=True)
    if vec.ndim != 1 or vec.shape[0] == 0:
        raise ConfigurationError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ConfigurationError("embedding components must be finite")
    if dim is not None and vec.shape[0] != dim:
        raise ConfigurationError(f"embedding dimension mismatch: expected {dim}, got {vec.shape[0]}")
    vec.flags.writeable = False
    return vec


def sq_dist(a, b) -> float:
    """Squared Euclidean distance between two equal-dimension vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.dot(diff, diff))


@dataclass(frozen=True)
class Detection:
    """One observation: frame index, detector confidence, embedding vector."""

    id: int
    frame: int
    score: float
    embedding: np.ndarray

    def __post_init__(self):
        if self.frame < 0:
            raise ConfigurationError(f"detection {self.id}: frame must be >= 0, got {self.frame}")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ConfigurationError(f"detection {self.id}: score must be finite in [0, 1], got {self.score}")
        object.__setattr__(self, "embedding", as_embedding(self.embedding))

    @property
    def dimension(self) -> int:
        return int(self.embedding.shape[0])


class DetectionStore:
    """Detections grouped by frame, frames indexed 0..frame_count-1.

    Iteration order is frame-major and stable; it defines the row order of
    ``embedding_matrix``.
    """

    def __init__(self, detections: Iterable[Detection]):
        dets = list(detections)
        frame_count = max((d.frame for d in dets), default=-1) + 1
        frames: list[list[Detection]] = [[] for _ in range(frame_count)]
        for det in dets:
            frames[det.frame].append(det)
        self._frames: tuple[tuple[Detection, ...], ...] = tuple(tuple(f) for f in frames)
        self._order: tuple[Detection, ...] = tuple(d for frame in self._frames for d in frame)

        seen: set[int] = set()
        dim: int | None = None
        for det in self._order:
            if det.id in seen:
                raise ConfigurationError(f"duplicate detection id {det.id}")
            seen.add(det.id)
            if dim is None:
                dim = det.dimension
            elif det.dimension != dim:
                raise ConfigurationError(
                    f"detection {det.id}: dimension {det.dimension} != store dimension {dim}"
                )
        self._dim = dim or 0
        self._row = {det.id: i for i, det in enumerate(self._order)}
        if self._order:
            matrix = np.stack([d.embedding for d in self._order]).astype(np.float64)
        else:
            matrix = np.zeros((0, 0), dtype=np.float64)
        matrix.flags.writeable = False
        self._matrix = matrix

    def __len__(self) -> int:
        return len(self._order)

    def __iter__(self):
        return iter(self._order)

    @property
    def frames(self) -> tuple[tuple[Detection, ...], ...]:
        return self._frames

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    @property
    def detections(self) -> tuple[Detection, ...]:
        return self._order

    @property
    def ids(self) -> list[int]:
        return [d.id for d in self._order]

    @property
    def dimension(self) -> int:
        return self._dim

    def by_id(self, det_id: int) -> Detection:
        return self._order[self._row[det_id]]

    def row_of(self, det_id: int) -> int:
        return self._row[det_id]

    def embedding_matrix(self) -> np.ndarray:
        """(N, d) float64 matrix in store order; read-only."""
        return self._matrix


@dataclass(frozen=True)
class MarginSet:
    """Margins for one self-paced iteration, in squared-distance units.

    alpha: violate margin; gamma: uncertainty margin; beta: verification
    threshold (None until calibrated).
    """

    alpha: float
    gamma: float
    beta: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigurationError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigurationError(f"gamma must be finite and >= 0, got {self.gamma}")
        if self.gamma >= self.alpha:
            raise ConfigurationError(
                f"empty negative band (gamma, alpha): gamma={self.gamma} must be < alpha={self.alpha}"
            )
        if self.beta is not None:
            if not (math.isfinite(self.beta) and self.beta > 0):
                raise ConfigurationError(f"beta must be finite and > 0, got {self.beta}")
            if self.beta <= self.gamma:
                raise ConfigurationError(
                    f"cluster radius beta/2 - gamma/2 must be positive: beta={self.beta}, gamma={self.gamma}"
                )

    def with_beta(self, beta: float) -> "MarginSet":
        return replace(self, beta=float(beta))


_MINING_OVERFLOW = ("clamp", "skip")
_MINING_POOLS = ("pseudo_labels", "printed")


@dataclass(frozen=True)
class SsdlConfig:
    """Run configuration: the margin schedule plus training hyperparameters."""

    db_margins: MarginSet
    da_margins: MarginSet
    min_cluster_size: int = 5
    epochs_per_iteration: int = 5
    learning_rate: float = 1.0
    lr_factor: float = 0.03
    seed: int = 0
    steps_per_epoch: int = 20
    batch_size: int | None = None
    mining_rank_overflow: str = "clamp"
    mining_negative_pool: str = "pseudo_labels"
    mining_dedupe_pairs: bool = False

    def __post_init__(self):
        if self.da_margins.alpha > self.db_margins.alpha or self.da_margins.gamma > self.db_margins.gamma:
            raise ConfigurationError(
                "margin schedule must be decremental: da margins "
                f"(alpha={self.da_margins.alpha}, gamma={self.da_margins.gamma}) exceed db margins "
                f"(alpha={self.db_margins.alpha}, gamma={self.db_margins.gamma})"
            )
        if self.min_cluster_size < 1:
            raise ConfigurationError(f"min_cluster_size must be >= 1, got {self.min_cluster_size}")
        if self.epochs_per_iteration < 1:
            raise ConfigurationError(f"epochs_per_iteration must be >= 1, got {self.epochs_per_iteration}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigurationError(f"learning_rate must be finite and > 0, got {self.learning_rate}")
        if not (math.isfinite(self.lr_factor) and self.lr_factor > 0):
            raise ConfigurationError(f"lr_factor must be finite and > 0, got {self.lr_factor}")
        if self.steps_per_epoch < 1:
            raise ConfigurationError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1 or unset, got {self.batch_size}")
        if self.mining_rank_overflow not in _MINING_OVERFLOW:
            raise ConfigurationError(f"mining_rank_overflow must be one of {_MINING_OVERFLOW}")
        if self.mining_negative_pool not in _MINING_POOLS:
            raise ConfigurationError(f"mining_negative_pool must be one of {_MINING_POOLS}")

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.lr_factor


def default_config(seed: int = 0, **overrides) -> SsdlConfig:
    """Stock configuration: alpha/gamma 0.2/0.1 for the first iteration,
    reduced to 0.1/0.05 for the second."""
    base = dict(
        db_margins=MarginSet(alpha=0.2, gamma=0.1),
        da_margins=MarginSet(alpha=0.1, gamma=0.05),
        seed=seed,
    )
    base.update(overrides)
    return SsdlConfig(**base)


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent deterministic substream for one purpose within a run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))
