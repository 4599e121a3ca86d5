"""Trainable affine embedding transform, optimized by gradient descent on the
margin-floored triplet loss over mined batches.

The loss only ever sees pairwise differences, where the bias cancels, so the
bias gradient is exactly zero; it is kept for the affine contract (identity
initialization, serialization, external reuse).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .cluster import ClusterSet
from .core import ConfigurationError, DetectionStore, MarginSet
from .triplets import TripletBatch, mine_triplets

__all__ = [
    "Adapter",
    "LossGrad",
    "TrainReport",
    "TrainingError",
    "batch_loss_and_gradient",
    "train_adapter",
]


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or parameters."""


@dataclass
class Adapter:
    """Affine map over embedding space: x -> weight @ x + bias."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ConfigurationError(f"weight must be square, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ConfigurationError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ConfigurationError("adapter parameters must be finite")

    @classmethod
    def identity(cls, dim: int) -> "Adapter":
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dimension(self) -> int:
        return int(self.weight.shape[0])

    def copy(self) -> "Adapter":
        return Adapter(self.weight.copy(), self.bias.copy())

    def apply(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=np.float64)
        if e.shape != (self.dimension,):
            raise ConfigurationError(f"embedding dimension {e.shape} does not match adapter {self.dimension}")
        return self.weight @ e + self.bias

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ConfigurationError(f"matrix shape {X.shape} does not match adapter dimension {self.dimension}")
        return X @ self.weight.T + self.bias

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "weight": [[float(x) for x in row] for row in self.weight],
            "bias": [float(x) for x in self.bias],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Adapter":
        try:
            weight = np.asarray(data["weight"], dtype=np.float64)
            bias = np.asarray(data["bias"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed adapter data: {exc}") from exc
        return cls(weight, bias)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Adapter":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"malformed adapter file {path}: {exc}") from exc
        return cls.from_dict(data)


class LossGrad(NamedTuple):
    loss: float
    weight_grad: np.ndarray
    bias_grad: np.ndarray
    active_fraction: float


def batch_loss_and_gradient(
    adapter: Adapter,
    batch: TripletBatch,
    store: DetectionStore,
    embeddings: np.ndarray | None = None,
    indices: np.ndarray | None = None,
) -> LossGrad:
    """Mean floored loss over the batch and its exact analytic gradient.

    Distances are computed as ||W (a - p)||^2 through raw differences, so the
    bias never enters the computation. ``indices`` restricts the batch to a
    subset (mini-batching).
    """
    if batch.is_empty:
        raise ConfigurationError("cannot compute loss of an empty batch")
    X = store.embedding_matrix() if embeddings is None else np.asarray(embeddings, dtype=np.float64)
    margins = batch.margins

    trips = batch.triplets
    if indices is not None:
        trips = [trips[i] for i in indices]
    rows_a = np.array([store.row_of(t.anchor) for t in trips])
    rows_p = np.array([store.row_of(t.positive) for t in trips])
    rows_n = np.array([store.row_of(t.negative) for t in trips])

    u = X[rows_a] - X[rows_p]
    v = X[rows_a] - X[rows_n]
    W = adapter.weight
    Wu = u @ W.T
    Wv = v @ W.T
    d_ap = np.einsum("nd,nd->n", Wu, Wu)
    d_an = np.einsum("nd,nd->n", Wv, Wv)

    args = d_ap - d_an + margins.alpha
    losses = np.maximum(margins.gamma, args)
    loss = float(np.mean(losses))

    active = args > margins.gamma
    count = len(trips)
    if np.any(active):
        ua, va = u[active], v[active]
        M = ua.T @ ua - va.T @ va
        weight_grad = (2.0 / count) * (W @ M)
    else:
        weight_grad = np.zeros_like(W)
    bias_grad = np.zeros(adapter.dimension)
    return LossGrad(loss, weight_grad, bias_grad, float(np.mean(active)))


@dataclass
class TrainReport:
    """Per-epoch training diagnostics; list lengths equal the epoch count."""

    mean_loss: list[float]
    active_fraction: list[float]
    triplet_counts: list[int]
    steps: int
    effective_lr: float

    def __post_init__(self):
        if not (len(self.mean_loss) == len(self.active_fraction) == len(self.triplet_counts)):
            raise ConfigurationError("train report lists must have equal lengths")

    def to_dict(self) -> dict:
        return {
            "mean_loss": [float(x) for x in self.mean_loss],
            "active_fraction": [float(x) for x in self.active_fraction],
            "triplet_counts": [int(x) for x in self.triplet_counts],
            "steps": int(self.steps),
            "effective_lr": float(self.effective_lr),
        }


def train_adapter(
    adapter: Adapter,
    store: DetectionStore,
    clusters: ClusterSet,
    margins: MarginSet,
    *,
    epochs: int,
    learning_rate: float,
    lr_factor: float = 0.03,
    steps_per_epoch: int = 20,
    batch_size: int | None = None,
    rng: np.random.Generator | None = None,
    mining_options: dict | None = None,
    preserve_scale: bool = True,
    on_batch: Callable[[int, TripletBatch], None] | None = None,
) -> tuple[Adapter, TrainReport]:
    """Run ``epochs`` rounds of re-mine + full-batch (or mini-batch) descent.

    Pseudo-labels stay frozen; each epoch re-mines with the epoch index under
    the current adapter's distances. The step size is
    ``learning_rate * lr_factor``. Empty epochs record the loss floor and take
    no steps.

    The triplet objective is scale-covariant, so unconstrained descent drifts
    the global scale of the space and silently invalidates the fixed
    verification threshold. With ``preserve_scale`` each step is followed by a
    global rescale of the weight that keeps the training cloud's total
    variance constant, the affine counterpart of training on a normalized
    hypersphere.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if learning_rate <= 0 or lr_factor <= 0:
        raise ConfigurationError("learning_rate and lr_factor must be > 0")
    effective_lr = learning_rate * lr_factor
    opts = mining_options or {}
    adapter = adapter.copy()
    raw = store.embedding_matrix()

    covariance = None
    raw_trace = 0.0
    if preserve_scale:
        centered = raw - raw.mean(axis=0)
        covariance = centered.T @ centered / len(raw)
        raw_trace = float(np.trace(covariance))

    mean_loss: list[float] = []
    active_fraction: list[float] = []
    triplet_counts: list[int] = []
    steps = 0

    for epoch in range(epochs):
        current = adapter.transform(raw)
        batch = mine_triplets(store, clusters, margins, epoch, embeddings=current, **opts)
        if on_batch is not None:
            on_batch(epoch, batch)
        triplet_counts.append(len(batch))
        if batch.is_empty:
            mean_loss.append(margins.gamma)  # floor by convention: nothing to learn
            active_fraction.append(0.0)
            continue

        first = batch_loss_and_gradient(adapter, batch, store)
        mean_loss.append(first.loss)
        active_fraction.append(first.active_fraction)

        order: np.ndarray | None = None
        cursor = 0
        for step in range(steps_per_epoch):
            if batch_size is None or batch_size >= len(batch):
                result = first if step == 0 else batch_loss_and_gradient(adapter, batch, store)
            else:
                if rng is None:
                    raise ConfigurationError("mini-batching requires a seeded rng")
                if order is None or cursor + batch_size > len(batch):
                    order = rng.permutation(len(batch))
                    cursor = 0
                sub = order[cursor : cursor + batch_size]
                cursor += batch_size
                result = batch_loss_and_gradient(adapter, batch, store, indices=sub)
            if not np.isfinite(result.loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} step {step}; lower the learning rate"
                )
            adapter.weight = adapter.weight - effective_lr * result.weight_grad
            adapter.bias = adapter.bias - effective_lr * result.bias_grad
            if not np.all(np.isfinite(adapter.weight)):
                raise TrainingError(
                    f"non-finite adapter weights at epoch {epoch} step {step}; lower the learning rate"
                )
            steps += 1

    report = TrainReport(mean_loss, active_fraction, triplet_counts, steps, effective_lr)
    return adapter, report
