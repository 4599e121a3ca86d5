import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssdl import ConfigurationError, Detection, DetectionStore, MarginSet, SsdlConfig, default_config, sq_dist

finite_vectors = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=8,
)


class TestSqDist:
    def test_identical_vectors(self):
        assert sq_dist([0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_hand_values(self):
        assert sq_dist([0.0, 0.0], [3.0, 4.0]) == 25.0
        assert sq_dist([1.0, 2.0], [1.0, 2.5]) == 0.25

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            sq_dist([1.0], [1.0, 2.0])

    @given(finite_vectors)
    def test_self_distance_zero(self, vec):
        assert sq_dist(vec, vec) == 0.0

    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_symmetry_and_nonnegativity(self, dim, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=dim), rng.normal(size=dim)
        assert sq_dist(a, b) == sq_dist(b, a)
        assert sq_dist(a, b) >= 0.0


class TestDetection:
    def test_valid(self):
        det = Detection(1, 0, 0.5, [1.0, 2.0])
        assert det.dimension == 2
        assert not det.embedding.flags.writeable

    @pytest.mark.parametrize("score", [-0.1, 1.5, float("nan")])
    def test_bad_score(self, score):
        with pytest.raises(ConfigurationError):
            Detection(1, 0, score, [1.0])

    def test_negative_frame(self):
        with pytest.raises(ConfigurationError):
            Detection(1, -1, 0.5, [1.0])

    def test_non_finite_embedding(self):
        with pytest.raises(ConfigurationError):
            Detection(1, 0, 0.5, [float("inf")])


class TestDetectionStore:
    def test_frame_grouping_and_order(self):
        dets = [
            Detection(10, 1, 0.9, [1.0]),
            Detection(11, 0, 0.8, [2.0]),
            Detection(12, 1, 0.7, [3.0]),
        ]
        store = DetectionStore(dets)
        assert store.frame_count == 2
        assert [d.id for d in store.frames[0]] == [11]
        assert [d.id for d in store.frames[1]] == [10, 12]
        assert store.ids == [11, 10, 12]  # frame-major iteration order
        assert store.row_of(12) == 2
        np.testing.assert_array_equal(store.embedding_matrix()[1], [1.0])

    def test_duplicate_id_rejected(self):
        with pytest.raises(ConfigurationError):
            DetectionStore([Detection(1, 0, 0.5, [1.0]), Detection(1, 1, 0.5, [2.0])])

    def test_mixed_dimension_rejected(self):
        with pytest.raises(ConfigurationError):
            DetectionStore([Detection(1, 0, 0.5, [1.0]), Detection(2, 0, 0.5, [1.0, 2.0])])

    def test_empty_frames_allowed(self):
        store = DetectionStore([Detection(5, 3, 0.5, [1.0])])
        assert store.frame_count == 4
        assert store.frames[0] == ()


class TestMarginSet:
    def test_valid(self):
        margins = MarginSet(alpha=0.2, gamma=0.1, beta=1.0)
        assert margins.with_beta(2.0).beta == 2.0

    def test_empty_band_rejected(self):
        with pytest.raises(ConfigurationError, match="empty negative band"):
            MarginSet(alpha=0.1, gamma=0.1)

    def test_gamma_above_alpha_rejected(self):
        with pytest.raises(ConfigurationError, match="empty negative band"):
            MarginSet(alpha=0.1, gamma=0.2)

    def test_non_positive_radius_rejected(self):
        with pytest.raises(ConfigurationError):
            MarginSet(alpha=0.5, gamma=0.2, beta=0.1)

    def test_beta_optional(self):
        assert MarginSet(alpha=0.2, gamma=0.1).beta is None


class TestSsdlConfig:
    def test_defaults_follow_reduction_schedule(self):
        config = default_config()
        assert (config.db_margins.alpha, config.db_margins.gamma) == (0.2, 0.1)
        assert (config.da_margins.alpha, config.da_margins.gamma) == (0.1, 0.05)
        assert config.min_cluster_size == 5
        assert config.lr_factor == 0.03

    def test_incremental_schedule_rejected(self):
        with pytest.raises(ConfigurationError, match="decremental"):
            SsdlConfig(
                db_margins=MarginSet(alpha=0.1, gamma=0.05),
                da_margins=MarginSet(alpha=0.2, gamma=0.1),
            )

    def test_effective_lr(self):
        config = default_config(learning_rate=2.0)
        assert config.effective_lr == pytest.approx(0.06)

    @pytest.mark.parametrize(
        "field,value",
        [
            ("min_cluster_size", 0),
            ("epochs_per_iteration", 0),
            ("learning_rate", 0.0),
            ("lr_factor", -1.0),
            ("steps_per_epoch", 0),
            ("batch_size", 0),
            ("mining_rank_overflow", "wrap"),
            ("mining_negative_pool", "everything"),
        ],
    )
    def test_invalid_fields(self, field, value):
        with pytest.raises(ConfigurationError):
            default_config(**{field: value})
