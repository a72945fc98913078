"""Continual unsupervised out-of-distribution detection.

A base detector scores samples by their mean metric distance to the k
nearest training features, summed over feature layers. During deployment
it grows into a few-shot difference detector scaled by bootstrap
confidence, and finally into a binary classifier, mixed in proportion to
the pseudo-labeled OOD samples collected so far.
"""

from ._kernels import backend_name
from .datastreams import (
    FeatureSet,
    GaussianComponent,
    StreamPlan,
    build_stream,
    materialize_batch,
    read_features,
    read_features_csv,
    synth_gaussians,
    write_features,
)
from .detector import (
    KNN_EUCLIDEAN,
    MAHAAD,
    MKNN,
    DetectorBank,
    LayerDetector,
    fit_detector,
    score,
    score_batch,
    score_layer,
)
from .engine import (
    EngineState,
    ExperimentConfig,
    combined_score,
    combined_scores,
    compute_threshold,
    init,
    mixing_alpha,
    pseudo_label,
    standardize,
    step,
)
from .fewshot import (
    FewShotLearner,
    bootstrap_seed,
    bootstrap_uncertainty,
    compute_lambda,
    fit_fewshot,
    score_fewshot,
    score_fewshot_batch,
)
from .linalg_stats import (
    GaussianFit,
    ShrunkCovariance,
    fit_gaussian,
    ledoit_wolf_nu,
    mahalanobis,
    shrink,
)
from .metrics import MetricCurve, auc, fpr_at_tpr, time_area
from .strong import BinaryLearner, StrongConfig, score_strong, score_strong_batch, train_strong

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "FeatureSet",
    "GaussianComponent",
    "StreamPlan",
    "build_stream",
    "materialize_batch",
    "read_features",
    "read_features_csv",
    "synth_gaussians",
    "write_features",
    "KNN_EUCLIDEAN",
    "MAHAAD",
    "MKNN",
    "DetectorBank",
    "LayerDetector",
    "fit_detector",
    "score",
    "score_batch",
    "score_layer",
    "EngineState",
    "ExperimentConfig",
    "combined_score",
    "combined_scores",
    "compute_threshold",
    "init",
    "mixing_alpha",
    "pseudo_label",
    "standardize",
    "step",
    "FewShotLearner",
    "bootstrap_seed",
    "bootstrap_uncertainty",
    "compute_lambda",
    "fit_fewshot",
    "score_fewshot",
    "score_fewshot_batch",
    "GaussianFit",
    "ShrunkCovariance",
    "fit_gaussian",
    "ledoit_wolf_nu",
    "mahalanobis",
    "shrink",
    "MetricCurve",
    "auc",
    "fpr_at_tpr",
    "time_area",
    "BinaryLearner",
    "StrongConfig",
    "score_strong",
    "score_strong_batch",
    "train_strong",
    "__version__",
]
