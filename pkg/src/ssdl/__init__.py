"""Self-supervised domain learning over a frozen embedding space.

The cycle: calibrate a verification threshold on labeled source pairs, then
adapt to an unlabeled target store through two self-paced iterations of
confident clustering, uncertainty-band triplet mining, and gradient descent
on an affine embedding adapter.
"""

from .adapter import Adapter, TrainReport, TrainingError, batch_loss_and_gradient, train_adapter
from .cluster import (
    Absorption,
    Cluster,
    ClusterSet,
    PairClass,
    classify_pair,
    cluster_radius,
    confident_cluster,
    filter_salient,
)
from .core import (
    ConfigurationError,
    Detection,
    DetectionStore,
    MarginSet,
    SsdlConfig,
    default_config,
    seeded_rng,
    sq_dist,
)
from .evalkit import (
    EvalBundle,
    FaceSet,
    MetricSnapshot,
    aggregate_set,
    build_calibration_pairs,
    build_eval_bundle,
    evaluate_bundle,
    rank1_identification,
    tar_at_far,
    verification_accuracy,
)
from .pipeline import IterationOutcome, PipelineResult, calibrate_beta, run_ssdl
from .synth import SynthSpec, generate_source, generate_target
from .triplets import (
    Triplet,
    TripletBatch,
    mine_triplets,
    obeys_uncertainty,
    triplet_loss,
    valid_negative_count,
    violates_margin,
)

__version__ = "0.1.0"
