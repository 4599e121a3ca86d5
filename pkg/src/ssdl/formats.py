"""File formats: JSONL embedding stores, labels, flat key=value configs,
evaluation bundles, reports, metrics CSV, and the run manifest.

Embedding files are JSONL with one object per detection:
``{"id": int, "frame": int, "score": float, "vec": [floats]}``.
Config files are flat ``key=value`` lines mirroring SsdlConfig; unknown keys
are errors so misspelled hyperparameters cannot silently default.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cluster import Cluster, ClusterSet
from .core import ConfigurationError, Detection, DetectionStore, MarginSet, SsdlConfig
from .evalkit import EvalBundle, MetricSnapshot, SetIds
from .pipeline import PipelineResult
from .triplets import TripletBatch

__all__ = [
    "config_text",
    "read_bundle",
    "read_clusters_json",
    "read_config",
    "read_labels",
    "read_store_jsonl",
    "sha256_file",
    "verify_manifest",
    "write_bundle",
    "write_clusters_json",
    "write_labels",
    "write_manifest",
    "write_metrics_csv",
    "write_report_json",
    "write_roc_csv",
    "write_store_jsonl",
    "write_triplets_jsonl",
]


# --- embedding stores ---------------------------------------------------

def write_store_jsonl(store: DetectionStore, path) -> None:
    lines = []
    for det in store:
        lines.append(
            json.dumps(
                {
                    "id": det.id,
                    "frame": det.frame,
                    "score": det.score,
                    "vec": [float(x) for x in det.embedding],
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_store_jsonl(path) -> DetectionStore:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"embeddings file not found: {path}")
    detections = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            detections.append(
                Detection(int(obj["id"]), int(obj["frame"]), float(obj["score"]), obj["vec"])
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"{path}: malformed JSONL at line {lineno}: {exc}") from exc
    return DetectionStore(detections)


# --- labels ---------------------------------------------------------------

def write_labels(path, source_labels: Mapping[int, int], target_labels: Mapping[int, int]) -> None:
    payload = {
        "source": {str(k): int(v) for k, v in sorted(source_labels.items())},
        "target": {str(k): int(v) for k, v in sorted(target_labels.items())},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_labels(path) -> tuple[dict[int, int], dict[int, int]]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"labels file not found: {path}")
    try:
        payload = json.loads(path.read_text())
        source = {int(k): int(v) for k, v in payload["source"].items()}
        target = {int(k): int(v) for k, v in payload["target"].items()}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed labels file: {exc}") from exc
    return source, target


# --- config ---------------------------------------------------------------

_CONFIG_KEYS = (
    "db_alpha",
    "db_gamma",
    "da_alpha",
    "da_gamma",
    "min_cluster_size",
    "epochs_per_iteration",
    "learning_rate",
    "lr_factor",
    "seed",
    "steps_per_epoch",
    "batch_size",
    "mining_rank_overflow",
    "mining_negative_pool",
    "mining_dedupe_pairs",
)

_DEFAULTS = {
    "db_alpha": 0.2,
    "db_gamma": 0.1,
    "da_alpha": 0.1,
    "da_gamma": 0.05,
}


def parse_config_text(text: str, origin: str = "<config>") -> SsdlConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{origin}: line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{origin}: line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigurationError(f"{origin}: line {lineno}: duplicate config key {key!r}")
        values[key] = value

    def get_float(key, default):
        return float(values[key]) if key in values else default

    def get_int(key, default):
        return int(values[key]) if key in values else default

    def get_bool(key, default):
        if key not in values:
            return default
        lowered = values[key].lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"{origin}: {key} must be a boolean, got {values[key]!r}")

    try:
        batch_size = None
        if values.get("batch_size", "none").lower() not in ("none", ""):
            batch_size = int(values["batch_size"])
        return SsdlConfig(
            db_margins=MarginSet(get_float("db_alpha", _DEFAULTS["db_alpha"]),
                                 get_float("db_gamma", _DEFAULTS["db_gamma"])),
            da_margins=MarginSet(get_float("da_alpha", _DEFAULTS["da_alpha"]),
                                 get_float("da_gamma", _DEFAULTS["da_gamma"])),
            min_cluster_size=get_int("min_cluster_size", 5),
            epochs_per_iteration=get_int("epochs_per_iteration", 5),
            learning_rate=get_float("learning_rate", 1.0),
            lr_factor=get_float("lr_factor", 0.03),
            seed=get_int("seed", 0),
            steps_per_epoch=get_int("steps_per_epoch", 20),
            batch_size=batch_size,
            mining_rank_overflow=values.get("mining_rank_overflow", "clamp"),
            mining_negative_pool=values.get("mining_negative_pool", "pseudo_labels"),
            mining_dedupe_pairs=get_bool("mining_dedupe_pairs", False),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{origin}: {exc}") from exc


def read_config(path) -> SsdlConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), origin=str(path))


def config_text(config: SsdlConfig) -> str:
    lines = [
        f"db_alpha = {config.db_margins.alpha!r}",
        f"db_gamma = {config.db_margins.gamma!r}",
        f"da_alpha = {config.da_margins.alpha!r}",
        f"da_gamma = {config.da_margins.gamma!r}",
        f"min_cluster_size = {config.min_cluster_size}",
        f"epochs_per_iteration = {config.epochs_per_iteration}",
        f"learning_rate = {config.learning_rate!r}",
        f"lr_factor = {config.lr_factor!r}",
        f"seed = {config.seed}",
        f"steps_per_epoch = {config.steps_per_epoch}",
        f"batch_size = {config.batch_size if config.batch_size is not None else 'none'}",
        f"mining_rank_overflow = {config.mining_rank_overflow}",
        f"mining_negative_pool = {config.mining_negative_pool}",
        f"mining_dedupe_pairs = {str(config.mining_dedupe_pairs).lower()}",
    ]
    return "\n".join(lines) + "\n"


# --- evaluation bundle ------------------------------------------------------

def write_bundle(bundle: EvalBundle, path) -> None:
    payload = {
        "pairs": [[int(a), int(b), bool(s)] for a, b, s in bundle.pairs],
        "gallery": [{"label": int(s.label), "ids": [int(i) for i in s.ids]} for s in bundle.gallery],
        "probes": [{"label": int(s.label), "ids": [int(i) for i in s.ids]} for s in bundle.probes],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def read_bundle(path) -> EvalBundle:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"bundle file not found: {path}")
    try:
        payload = json.loads(path.read_text())
        pairs = tuple((int(a), int(b), bool(s)) for a, b, s in payload["pairs"])
        gallery = tuple(SetIds(int(s["label"]), tuple(int(i) for i in s["ids"])) for s in payload["gallery"])
        probes = tuple(SetIds(int(s["label"]), tuple(int(i) for i in s["ids"])) for s in payload["probes"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed bundle file: {exc}") from exc
    if not pairs:
        raise ConfigurationError(f"{path}: bundle has no pairs")
    return EvalBundle(pairs, gallery, probes)


# --- run artifacts -----------------------------------------------------------

def write_report_json(result: PipelineResult, path) -> None:
    Path(path).write_text(json.dumps(result.to_report_dict(), sort_keys=True, indent=2) + "\n")


def write_metrics_csv(metrics: Mapping[str, MetricSnapshot], path) -> None:
    stages = ["baseline", "post_db", "post_da"]
    far_targets = [far for far, _ in metrics["baseline"].tar_at_far]
    header = ["stage", "verification_accuracy"] + [f"tar_at_far_{far!r}" for far in far_targets] + ["rank1"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)  # csv defaults follow RFC 4180 (CRLF, minimal quoting)
        writer.writerow(header)
        for stage in stages:
            snap = metrics[stage]
            writer.writerow(
                [stage, repr(snap.verification_accuracy)]
                + [repr(tar) for _, tar in snap.tar_at_far]
                + [repr(snap.rank1)]
            )


def write_roc_csv(rows: Sequence[tuple[float, float, float]], path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["threshold", "tar", "far"])
        for threshold, tar, far in rows:
            writer.writerow([repr(threshold), repr(tar), repr(far)])


def write_clusters_json(clusters: ClusterSet, path) -> None:
    payload = [
        {"label": c.label, "member_ids": list(c.member_ids), "center": [float(x) for x in c.center]}
        for c in clusters.clusters
    ]
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def read_clusters_json(path) -> ClusterSet:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"clusters file not found: {path}")
    try:
        payload = json.loads(path.read_text())
        clusters = [
            Cluster(int(c["label"]), [int(i) for i in c["member_ids"]],
                    np.asarray(c["center"], dtype=np.float64))
            for c in payload
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed clusters file: {exc}") from exc
    assignment = {det_id: c.label for c in clusters for det_id in c.member_ids}
    return ClusterSet(clusters, assignment)


def write_triplets_jsonl(batches: Sequence[tuple[str, TripletBatch]], path) -> None:
    lines = []
    for iteration, batch in batches:
        for record in batch.to_records():
            record["iteration"] = iteration
            record["epoch"] = batch.epoch
            lines.append(json.dumps(record, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# --- manifest ----------------------------------------------------------------

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path, *, config: SsdlConfig, seed: int, inputs: Mapping[str, str],
                   artifacts: Mapping[str, str], timings: Mapping[str, float]) -> None:
    payload = {
        "config": config_text(config),
        "seed": int(seed),
        "inputs": {name: {"path": str(p), "sha256": sha256_file(p)} for name, p in inputs.items()},
        "artifacts": {name: str(p) for name, p in artifacts.items()},
        "timings_seconds": {name: float(t) for name, t in timings.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def verify_manifest(path) -> dict:
    """Re-hash the manifest's inputs; raises when any digest has drifted."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"unreadable manifest {path}: {exc}") from exc
    for name, entry in payload.get("inputs", {}).items():
        actual = sha256_file(entry["path"])
        if actual != entry["sha256"]:
            raise ConfigurationError(
                f"manifest digest mismatch for {name}: recorded {entry['sha256']}, recomputed {actual}"
            )
    return payload
