import json

import numpy as np
import pytest

from ssdl import (
    ConfigurationError,
    MarginSet,
    SynthSpec,
    build_eval_bundle,
    calibrate_beta,
    default_config,
    generate_source,
    generate_target,
    run_ssdl,
)
from ssdl.pipeline import calibration_report


def pairs_with_distances(pos, neg):
    out = []
    for d in pos:
        out.append((np.array([0.0]), np.array([np.sqrt(d)]), True))
    for d in neg:
        out.append((np.array([0.0]), np.array([np.sqrt(d)]), False))
    return out


class TestCalibrateBeta:
    def test_perfect_band_midpoint(self):
        pairs = pairs_with_distances([0.1, 0.2], [0.8, 0.9])
        report = calibration_report(pairs)
        assert report.beta == pytest.approx(0.5)
        assert report.accuracy == 1.0

    def test_symmetric_two_point(self):
        assert calibrate_beta(pairs_with_distances([0.1], [0.9])) == pytest.approx(0.5)

    def test_inverted_pair_ties_resolve_deterministically(self):
        report = calibration_report(pairs_with_distances([0.3], [0.1]))
        assert report.accuracy == pytest.approx(0.5)
        assert report.beta == pytest.approx(0.05)  # below-min sentinel wins the tie
        assert "lowest threshold" in report.tie_break

    def test_degenerate_distances_warn(self):
        pairs = pairs_with_distances([0.25], [0.25])
        with pytest.warns(UserWarning, match="degenerate"):
            report = calibration_report(pairs)
        assert report.degenerate
        assert report.beta == pytest.approx(0.25 + 1e-9)

    def test_needs_both_labels(self):
        with pytest.raises(ConfigurationError):
            calibrate_beta(pairs_with_distances([0.1, 0.2], []))

    def test_beats_dense_sweep(self, rng):
        for _ in range(10):
            pos = rng.uniform(0.0, 1.0, size=15)
            neg = rng.uniform(0.4, 2.0, size=15)
            pairs = pairs_with_distances(pos, neg)
            beta = calibrate_beta(pairs)
            dists = np.concatenate([pos, neg])
            labels = np.array([True] * 15 + [False] * 15)
            best_acc = np.mean((dists[None, :] < beta) == labels)
            for theta in np.linspace(0, 2.2, 2000):
                assert best_acc >= np.mean((dists < theta) == labels) - 1e-12


def tiny_scenario(**config_overrides):
    spec = SynthSpec(
        identities=6,
        detections_per_identity=14,
        dimension=8,
        intra_class_sigma=0.05,
        shift_rotation_angle=0.25,
        shift_translation_norm=0.8,
        noise_sigma=0.08,
        seed=11,
    )
    source, source_labels = generate_source(spec)
    target, target_labels = generate_target(spec, source, source_labels)
    bundle = build_eval_bundle(target, target_labels, seed=11, n_pos=60, n_neg=120)
    kwargs = dict(min_cluster_size=3, epochs_per_iteration=3, steps_per_epoch=5)
    kwargs.update(config_overrides)
    config = default_config(seed=11, **kwargs)
    return target, config, bundle


class TestRunSsdl:
    def test_snapshots_and_outcome_shapes(self):
        target, config, bundle = tiny_scenario()
        beta = 0.35
        result = run_ssdl(target, config, beta, bundle)
        assert set(result.metrics) == {"baseline", "post_db", "post_da"}
        assert result.beta == beta
        for outcome in (result.db, result.da):
            assert len(outcome.triplet_counts) == config.epochs_per_iteration
            assert outcome.cluster_count >= outcome.salient_cluster_count
        assert result.db.margins.alpha == 0.2 and result.da.margins.alpha == 0.1

    def test_default_margins_put_band_on_floor(self):
        # alpha = 2*gamma leaves every mined triplet at the loss floor: the
        # adapter cannot move, so all three snapshots coincide exactly
        target, config, bundle = tiny_scenario()
        result = run_ssdl(target, config, 0.35, bundle)
        assert np.array_equal(result.adapter.weight, np.eye(target.dimension))
        assert result.metrics["baseline"] == result.metrics["post_db"] == result.metrics["post_da"]

    def test_zero_shift_null_run_keeps_metrics(self):
        spec = SynthSpec(identities=6, detections_per_identity=14, dimension=8,
                         intra_class_sigma=0.05, seed=4)
        target, labels = generate_target(spec)
        bundle = build_eval_bundle(target, labels, seed=4, n_pos=50, n_neg=100)
        config = default_config(seed=4, min_cluster_size=3)
        result = run_ssdl(target, config, 0.4, bundle)
        base = result.metrics["baseline"].as_vector()
        for stage in ("post_db", "post_da"):
            np.testing.assert_allclose(result.metrics[stage].as_vector(), base, atol=1e-9)
        np.testing.assert_array_equal(result.adapter.weight, np.eye(8))
        np.testing.assert_array_equal(result.adapter.bias, np.zeros(8))

    def test_training_moves_adapter_with_open_band(self):
        target, config, bundle = tiny_scenario(
            db_margins=MarginSet(alpha=0.2, gamma=0.05),
            da_margins=MarginSet(alpha=0.1, gamma=0.025),
        )
        result = run_ssdl(target, config, 0.35, bundle)
        assert not np.array_equal(result.adapter.weight, np.eye(target.dimension))

    def test_deterministic_reports(self):
        target, config, bundle = tiny_scenario()
        a = run_ssdl(target, config, 0.35, bundle)
        b = run_ssdl(target, config, 0.35, bundle)
        assert json.dumps(a.to_report_dict(), sort_keys=True) == json.dumps(b.to_report_dict(), sort_keys=True)
        np.testing.assert_array_equal(a.adapter.weight, b.adapter.weight)

    def test_degraded_when_nothing_salient(self):
        target, config, bundle = tiny_scenario(min_cluster_size=1000)
        with pytest.warns(UserWarning, match="skipped"):
            result = run_ssdl(target, config, 0.35, bundle)
        assert result.degraded
        assert result.db.skipped and result.da.skipped
        assert result.db.triplet_counts == [0] * config.epochs_per_iteration

    def test_empty_target_rejected(self):
        from ssdl import DetectionStore

        _, config, bundle = tiny_scenario()
        with pytest.raises(ConfigurationError):
            run_ssdl(DetectionStore([]), config, 0.35, bundle)

    def test_on_batch_hook_sees_both_iterations(self):
        target, config, bundle = tiny_scenario()
        seen = []
        run_ssdl(target, config, 0.35, bundle,
                 on_batch=lambda name, epoch, batch: seen.append((name, epoch)))
        assert [s for s in seen if s[0] == "db"] == [("db", e) for e in range(3)]
        assert [s for s in seen if s[0] == "da"] == [("da", e) for e in range(3)]

    def test_report_dict_schema(self):
        target, config, bundle = tiny_scenario()
        report = run_ssdl(target, config, 0.35, bundle).to_report_dict()
        assert set(report) == {"beta", "db", "da", "metrics", "degraded"}
        assert set(report["metrics"]) == {"baseline", "post_db", "post_da"}
        assert {"margins", "cluster_count", "salient_cluster_count", "triplet_counts",
                "train", "skipped"} <= set(report["db"])
