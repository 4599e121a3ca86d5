"""Command-line entry point: synth / run / eval / cluster / mine.

Exit codes: 0 success, 2 validation or I/O error, 3 degraded pipeline run
(an iteration was skipped). The default output root is --out-dir, then the
SSDL_OUT_DIR environment variable, then ./ssdl-out.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import formats
from .adapter import Adapter, TrainingError
from .cluster import confident_cluster, filter_salient
from .core import ConfigurationError, MarginSet, SsdlConfig
from .evalkit import build_calibration_pairs, build_eval_bundle, evaluate_bundle, roc_table
from .pipeline import calibrate_beta, run_ssdl
from .synth import SynthSpec, generate_source, generate_target
from .triplets import mine_triplets

__all__ = ["entrypoint", "main"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DEGRADED = 3


def _out_dir(args) -> Path:
    root = args.out_dir or os.environ.get("SSDL_OUT_DIR") or "ssdl-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=None, help="output directory (default: $SSDL_OUT_DIR or ./ssdl-out)")
    parser.add_argument("--threads", type=int, default=1,
                        help="bound on internal parallelism; results are independent of it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic source/target embedding pair")
    p_synth.add_argument("--identities", type=int, required=True)
    p_synth.add_argument("--per", type=int, required=True, help="detections per identity")
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--intra-sigma", type=float, default=0.05)
    p_synth.add_argument("--rotation", type=float, default=0.3, help="shift rotation angle (radians)")
    p_synth.add_argument("--translation", type=float, default=1.0, help="shift translation norm")
    p_synth.add_argument("--noise-sigma", type=float, default=0.1)
    _add_common(p_synth)

    p_run = sub.add_parser("run", help="calibrate beta on source pairs and run the full cycle")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--data", required=True,
                       help="directory holding source.jsonl, target.jsonl, labels.json")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    _add_common(p_run)

    p_eval = sub.add_parser("eval", help="apply an adapter and re-evaluate a bundle")
    p_eval.add_argument("--adapter", required=True)
    p_eval.add_argument("--embeddings", required=True)
    p_eval.add_argument("--bundle", required=True)
    p_eval.add_argument("--beta", type=float, required=True)
    _add_common(p_eval)

    p_cluster = sub.add_parser("cluster", help="run confident clustering only")
    p_cluster.add_argument("--embeddings", required=True)
    p_cluster.add_argument("--alpha", type=float, default=0.2)
    p_cluster.add_argument("--gamma", type=float, default=0.1)
    p_cluster.add_argument("--beta", type=float, required=True)
    p_cluster.add_argument("--min-size", type=int, default=1)
    _add_common(p_cluster)

    p_mine = sub.add_parser("mine", help="run triplet collection only")
    p_mine.add_argument("--embeddings", required=True)
    p_mine.add_argument("--clusters", required=True)
    p_mine.add_argument("--alpha", type=float, default=0.2)
    p_mine.add_argument("--gamma", type=float, default=0.1)
    p_mine.add_argument("--epoch", type=int, default=0)
    _add_common(p_mine)
    return parser


def _validate_threads(args) -> None:
    if getattr(args, "threads", 1) < 1:
        raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")


def cmd_synth(args) -> int:
    out = _out_dir(args)
    spec = SynthSpec(
        identities=args.identities,
        detections_per_identity=args.per,
        dimension=args.dim,
        intra_class_sigma=args.intra_sigma,
        shift_rotation_angle=args.rotation,
        shift_translation_norm=args.translation,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    source, source_labels = generate_source(spec)
    target, target_labels = generate_target(spec, source, source_labels)
    formats.write_store_jsonl(source, out / "source.jsonl")
    formats.write_store_jsonl(target, out / "target.jsonl")
    formats.write_labels(out / "labels.json", source_labels, target_labels)
    print(f"wrote {len(source)} source and {len(target)} target detections to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    out = _out_dir(args)
    data = Path(args.data)
    config = formats.read_config(args.config)
    if args.seed is not None:
        config = SsdlConfig(**{**config.__dict__, "seed": args.seed})

    source_path, target_path, labels_path = (
        data / "source.jsonl", data / "target.jsonl", data / "labels.json",
    )
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    source = formats.read_store_jsonl(source_path)
    target = formats.read_store_jsonl(target_path)
    source_labels, target_labels = formats.read_labels(labels_path)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    calibration_pairs = build_calibration_pairs(source, source_labels, config.seed)
    beta = calibrate_beta(calibration_pairs)
    timings["calibrate"] = time.perf_counter() - t0

    bundle = build_eval_bundle(target, target_labels, config.seed)
    batches: list = []
    t0 = time.perf_counter()
    result = run_ssdl(target, config, beta, bundle,
                      on_batch=lambda name, epoch, batch: batches.append((name, batch)))
    timings["ssdl"] = time.perf_counter() - t0

    artifacts = {
        "report": out / "report.json",
        "metrics": out / "metrics.csv",
        "adapter": out / "adapter.json",
        "bundle": out / "eval_bundle.json",
        "triplets": out / "triplets.jsonl",
    }
    formats.write_report_json(result, artifacts["report"])
    formats.write_metrics_csv(result.metrics, artifacts["metrics"])
    result.adapter.save(artifacts["adapter"])
    formats.write_bundle(bundle, artifacts["bundle"])
    formats.write_triplets_jsonl(batches, artifacts["triplets"])
    for outcome in (result.db, result.da):
        if outcome.cluster_set is not None:
            cluster_path = out / f"clusters_{outcome.name}.json"
            formats.write_clusters_json(outcome.cluster_set, cluster_path)
            artifacts[f"clusters_{outcome.name}"] = cluster_path
    formats.write_manifest(
        out / "manifest.json",
        config=config,
        seed=config.seed,
        inputs={"config": args.config, "source": source_path, "target": target_path, "labels": labels_path},
        artifacts=artifacts,
        timings=timings,
    )

    accuracies = {name: snap.verification_accuracy for name, snap in result.metrics.items()}
    print(f"beta={beta:.6f} verification accuracy: "
          f"baseline={accuracies['baseline']:.4f} post_db={accuracies['post_db']:.4f} "
          f"post_da={accuracies['post_da']:.4f}")
    if result.degraded:
        print("degraded run: an iteration was skipped (see report.json)", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    adapter = Adapter.load(args.adapter)
    store = formats.read_store_jsonl(args.embeddings)
    if store.dimension != adapter.dimension:
        raise ConfigurationError(
            f"adapter dimension {adapter.dimension} does not match embeddings dimension {store.dimension}"
        )
    bundle = formats.read_bundle(args.bundle)
    snapshot = evaluate_bundle(store, bundle, adapter, args.beta)
    formats.write_metrics_csv(
        {"baseline": snapshot, "post_db": snapshot, "post_da": snapshot}, out / "eval_metrics.csv"
    )
    X = adapter.transform(store.embedding_matrix())
    pairs = [(X[store.row_of(a)], X[store.row_of(b)], same) for a, b, same in bundle.pairs]
    formats.write_roc_csv(roc_table(pairs), out / "eval_roc.csv")
    print(f"verification_accuracy={snapshot.verification_accuracy:.4f} rank1={snapshot.rank1:.4f}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    store = formats.read_store_jsonl(args.embeddings)
    margins = MarginSet(alpha=args.alpha, gamma=args.gamma, beta=args.beta)
    clusters = filter_salient(confident_cluster(store, margins), args.min_size)
    formats.write_clusters_json(clusters, out / "clusters.json")
    print(f"wrote {len(clusters)} clusters ({len(clusters.assignment)} assigned detections)")
    return EXIT_OK


def cmd_mine(args) -> int:
    out = _out_dir(args)
    store = formats.read_store_jsonl(args.embeddings)
    clusters = formats.read_clusters_json(args.clusters)
    margins = MarginSet(alpha=args.alpha, gamma=args.gamma)
    batch = mine_triplets(store, clusters, margins, args.epoch)
    formats.write_triplets_jsonl([("mine", batch)], out / "triplets.jsonl")
    print(f"mined {len(batch)} triplets at epoch {args.epoch}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "run": cmd_run,
    "eval": cmd_eval,
    "cluster": cmd_cluster,
    "mine": cmd_mine,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate_threads(args)
        return _COMMANDS[args.command](args)
    except (ConfigurationError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entrypoint() -> None:
    raise SystemExit(main())
