"""Self-paced two-iteration cycle: calibrate beta once on labeled source
pairs, then run the first iteration with wide margins and the second with
reduced ones. Each iteration re-clusters the target under the current
adapter, mines per-epoch triplet batches, and updates the adapter.

Ground-truth labels never enter this module's training path; they live in the
synthetic generator's outputs and the evaluation bundle only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .adapter import Adapter, TrainReport, train_adapter
from .cluster import ClusterSet, confident_cluster, filter_salient
from .core import (
    ConfigurationError,
    Detection,
    DetectionStore,
    MarginSet,
    SsdlConfig,
    seeded_rng,
    sq_dist,
)
from .evalkit import DEFAULT_FAR_TARGETS, EvalBundle, MetricSnapshot, evaluate_bundle
from .triplets import TripletBatch

__all__ = [
    "CalibrationResult",
    "IterationOutcome",
    "PipelineResult",
    "calibrate_beta",
    "calibration_report",
    "run_ssdl",
]


@dataclass(frozen=True)
class CalibrationResult:
    beta: float
    accuracy: float
    degenerate: bool
    tie_break: str  # "unique" or "widest-gap, then lowest threshold"


def calibration_report(pairs: Sequence[tuple]) -> CalibrationResult:
    """Sweep thresholds at midpoints between consecutive distinct squared
    distances (plus sentinels) and keep the accuracy maximiser.

    Ties resolve to the candidate sitting in the widest gap, then to the
    lowest threshold.
    """
    dists = []
    labels = []
    for a, b, same in pairs:
        dists.append(sq_dist(a, b))
        labels.append(bool(same))
    dists = np.asarray(dists)
    labels = np.asarray(labels)
    if not labels.any() or labels.all():
        raise ConfigurationError("calibration needs at least one positive and one negative pair")

    unique = np.unique(dists)
    if unique.size == 1:
        warnings.warn(f"all calibration distances identical ({unique[0]}); threshold is degenerate")
        beta = float(unique[0]) + 1e-9
        accuracy = float(np.mean((dists < beta) == labels))
        return CalibrationResult(beta, accuracy, True, "degenerate")

    candidates = [0.5 * unique[0]] + [0.5 * (unique[i] + unique[i + 1]) for i in range(unique.size - 1)]
    candidates.append(1.5 * unique[-1])
    widths = [np.inf] + [float(unique[i + 1] - unique[i]) for i in range(unique.size - 1)] + [np.inf]

    best = None  # (accuracy, width, -threshold) maximised
    for theta, width in zip(candidates, widths):
        accuracy = float(np.mean((dists < theta) == labels))
        key = (accuracy, width, -theta)
        if best is None or key > best[0]:
            best = (key, theta, accuracy)
    _, beta, accuracy = best
    ties = sum(1 for theta in candidates if float(np.mean((dists < theta) == labels)) == accuracy)
    tie_break = "unique" if ties == 1 else "widest-gap, then lowest threshold"
    return CalibrationResult(float(beta), accuracy, False, tie_break)


def calibrate_beta(pairs: Sequence[tuple]) -> float:
    """Verification threshold with the highest accuracy on labeled pairs."""
    return calibration_report(pairs).beta


@dataclass
class IterationOutcome:
    name: str
    margins: MarginSet
    cluster_count: int
    salient_cluster_count: int
    triplet_counts: list[int]
    train_report: TrainReport | None
    skipped: bool
    cluster_set: ClusterSet | None = None

    def to_dict(self) -> dict:
        return {
            "margins": {
                "alpha": float(self.margins.alpha),
                "gamma": float(self.margins.gamma),
                "beta": float(self.margins.beta) if self.margins.beta is not None else None,
            },
            "cluster_count": int(self.cluster_count),
            "salient_cluster_count": int(self.salient_cluster_count),
            "triplet_counts": [int(x) for x in self.triplet_counts],
            "train": self.train_report.to_dict() if self.train_report else None,
            "skipped": bool(self.skipped),
        }


@dataclass
class PipelineResult:
    beta: float
    db: IterationOutcome
    da: IterationOutcome
    adapter: Adapter
    metrics: dict[str, MetricSnapshot]  # baseline / post_db / post_da
    degraded: bool

    def to_report_dict(self) -> dict:
        return {
            "beta": float(self.beta),
            "db": self.db.to_dict(),
            "da": self.da.to_dict(),
            "metrics": {name: snap.to_dict() for name, snap in self.metrics.items()},
            "degraded": bool(self.degraded),
        }


def _run_iteration(
    name: str,
    store: DetectionStore,
    adapter: Adapter,
    margins: MarginSet,
    config: SsdlConfig,
    rng: np.random.Generator,
    on_batch: Callable[[str, int, TripletBatch], None] | None,
) -> tuple[Adapter, IterationOutcome]:
    transformed = adapter.transform(store.embedding_matrix())
    clustered_store = DetectionStore(
        [Detection(d.id, d.frame, d.score, transformed[store.row_of(d.id)]) for d in store]
    )
    clusters = confident_cluster(clustered_store, margins)
    salient = filter_salient(clusters, config.min_cluster_size)
    epochs = config.epochs_per_iteration

    if salient.is_empty:
        warnings.warn(f"{name}: no salient clusters; iteration skipped")
        outcome = IterationOutcome(
            name, margins, len(clusters), 0, [0] * epochs, None, True, salient
        )
        return adapter, outcome

    hook = (lambda epoch, batch: on_batch(name, epoch, batch)) if on_batch else None
    updated, report = train_adapter(
        adapter,
        store,
        salient,
        margins,
        epochs=epochs,
        learning_rate=config.learning_rate,
        lr_factor=config.lr_factor,
        steps_per_epoch=config.steps_per_epoch,
        batch_size=config.batch_size,
        rng=rng,
        mining_options={
            "rank_overflow": config.mining_rank_overflow,
            "negative_pool": config.mining_negative_pool,
            "dedupe_pairs": config.mining_dedupe_pairs,
        },
        on_batch=hook,
    )
    skipped = all(count == 0 for count in report.triplet_counts)
    if skipped:
        warnings.warn(f"{name}: every epoch mined an empty batch; iteration had no effect")
    outcome = IterationOutcome(
        name, margins, len(clusters), len(salient), list(report.triplet_counts), report, skipped, salient
    )
    return updated, outcome


def run_ssdl(
    target: DetectionStore,
    config: SsdlConfig,
    beta: float,
    bundle: EvalBundle,
    far_targets: Sequence[float] = DEFAULT_FAR_TARGETS,
    on_batch: Callable[[str, int, TripletBatch], None] | None = None,
) -> PipelineResult:
    """Run the full cycle on an unlabeled target store and a calibrated beta.

    ``bundle`` is the frozen evaluation protocol used for the three metric
    snapshots; it is never consulted by clustering, mining, or training.
    """
    if len(target) == 0:
        raise ConfigurationError("target store is empty")
    db_margins = config.db_margins.with_beta(beta)
    da_margins = config.da_margins.with_beta(beta)

    adapter = Adapter.identity(target.dimension)
    metrics = {"baseline": evaluate_bundle(target, bundle, adapter, beta, far_targets)}

    rng = seeded_rng(config.seed, stream=7)
    adapter, db = _run_iteration("db", target, adapter, db_margins, config, rng, on_batch)
    metrics["post_db"] = evaluate_bundle(target, bundle, adapter, beta, far_targets)

    adapter, da = _run_iteration("da", target, adapter, da_margins, config, rng, on_batch)
    metrics["post_da"] = evaluate_bundle(target, bundle, adapter, beta, far_targets)

    degraded = db.skipped or da.skipped
    return PipelineResult(float(beta), db, da, adapter, metrics, degraded)
