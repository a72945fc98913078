"""Per-layer OOD scoring banks: metric k-NN, distance-to-mean, plain k-NN.

The main scoring function measures the mean distance from a query to its
k nearest training features under the layer's shrunk-covariance metric,
summed over layers. Two ablation variants share the machinery: distance
to the training mean under the same metric, and plain Euclidean k-NN.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import knn_mean_distance
from .datastreams import FeatureSet
from .errors import ConfigError, InsufficientDataError, ShapeError
from .linalg_stats import (
    ShrunkCovariance,
    fit_gaussian,
    ledoit_wolf_nu,
    shrink,
    whiten,
)

MKNN = "mknn"
MAHAAD = "mahaad"
KNN_EUCLIDEAN = "knn"
VARIANTS = (MKNN, MAHAAD, KNN_EUCLIDEAN)


@dataclass(frozen=True)
class LayerDetector:
    """Fitted state for one layer: metric, retained features, neighbors."""

    train_features: np.ndarray  # (N, d) float64, as fitted
    cov: ShrunkCovariance
    k: int
    mean: np.ndarray
    variant: str
    # Whitened copies cached so each query costs one triangular solve.
    train_white: np.ndarray = field(repr=False, default=None)

    @property
    def n_train(self) -> int:
        return self.train_features.shape[0]

    @property
    def dim(self) -> int:
        return self.train_features.shape[1]


@dataclass(frozen=True)
class DetectorBank:
    """Ordered per-layer detectors; the bank score is the layer sum."""

    layers: tuple
    variant: str
    k: int

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple:
        return tuple(layer.dim for layer in self.layers)


def _fit_layer(features: np.ndarray, k: int, variant: str) -> LayerDetector:
    features = np.asarray(features, dtype=np.float64)
    n, d = features.shape
    if variant == KNN_EUCLIDEAN:
        cov = shrink(np.eye(d), 0.0)
    else:
        fit = fit_gaussian(features)
        try:
            nu = ledoit_wolf_nu(features)
        except InsufficientDataError:
            nu = 1.0
        cov = shrink(fit.cov, nu)
    mean = features.mean(axis=0)
    centered = features - mean
    train_white = whiten(centered, cov)
    return LayerDetector(
        train_features=features,
        cov=cov,
        k=k,
        mean=mean,
        variant=variant,
        train_white=train_white,
    )


def fit_detector(features: FeatureSet, k: int, variant: str = MKNN) -> DetectorBank:
    """Fit one LayerDetector per layer of ``features``.

    Per layer: Gaussian fit, shrinkage intensity, shrunk covariance, and a
    whitened copy of the training features for neighbor search. The
    distance-to-mean variant ignores ``k``.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown detector variant {variant!r}")
    if k < 1:
        raise ConfigError(f"neighbor count must be at least 1, got {k}")
    if variant != MAHAAD and k > features.n:
        raise ConfigError(
            f"neighbor count k={k} exceeds the {features.n} training samples"
        )
    layers = tuple(_fit_layer(arr, k, variant) for arr in features.layers)
    return DetectorBank(layers=layers, variant=variant, k=k)


def score_layer_batch(layer: LayerDetector, queries: np.ndarray) -> np.ndarray:
    """Scores for a (m, d) query matrix against one layer."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != layer.dim:
        raise ShapeError(
            f"queries must be (m, {layer.dim}), got shape {queries.shape}"
        )
    query_white = whiten(queries - layer.mean, layer.cov)
    if layer.variant == MAHAAD:
        return np.linalg.norm(query_white, axis=1)
    return knn_mean_distance(layer.train_white, query_white, layer.k)


def score_layer(layer: LayerDetector, x: np.ndarray) -> float:
    """Score one query vector against one layer.

    For the neighbor variants this is the mean metric distance to the k
    nearest training rows (full scan, ties by lowest row index); for the
    distance-to-mean variant it is the metric distance to the layer mean.
    Delegates to the batch path so single and batch scoring agree exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.dim,):
        raise ShapeError(f"expected a vector of length {layer.dim}, got {x.shape}")
    return float(score_layer_batch(layer, x[None, :])[0])


def score(bank: DetectorBank, x) -> float:
    """Sum of per-layer scores for one sample (one vector per layer)."""
    if len(x) != bank.n_layers:
        raise ShapeError(
            f"expected {bank.n_layers} layer vectors, got {len(x)}"
        )
    return float(sum(score_layer(layer, xi) for layer, xi in zip(bank.layers, x)))


def score_batch(bank: DetectorBank, features) -> np.ndarray:
    """Bank scores for a FeatureSet or a sequence of per-layer matrices."""
    arrays = features.layers if isinstance(features, FeatureSet) else features
    if len(arrays) != bank.n_layers:
        raise ShapeError(
            f"expected {bank.n_layers} layer matrices, got {len(arrays)}"
        )
    total = None
    for layer, arr in zip(bank.layers, arrays):
        part = score_layer_batch(layer, np.asarray(arr, dtype=np.float64))
        total = part if total is None else total + part
    return total


def score_layer_batch_loo(layer: LayerDetector, queries: np.ndarray) -> np.ndarray:
    """Neighbor scores for rows of the layer's own training set.

    Each query is assumed to sit in the bank with an exact-zero self
    distance; that zero is dropped, so the result is the mean distance to
    the k nearest *other* rows (k clamped to N-1). Used for calibrating
    thresholds on training data, where the self match would bias scores
    low. The distance-to-mean variant has no self match and scores
    normally.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if layer.variant == MAHAAD:
        return score_layer_batch(layer, queries)
    n = layer.n_train
    if n <= 1:
        return np.zeros(queries.shape[0])
    k_loo = min(layer.k, n - 1)
    query_white = whiten(queries - layer.mean, layer.cov)
    with_self = knn_mean_distance(layer.train_white, query_white, k_loo + 1)
    return with_self * (k_loo + 1) / k_loo


def score_batch_loo(bank: DetectorBank, features) -> np.ndarray:
    """Layer-summed :func:`score_layer_batch_loo`."""
    arrays = features.layers if isinstance(features, FeatureSet) else features
    if len(arrays) != bank.n_layers:
        raise ShapeError(
            f"expected {bank.n_layers} layer matrices, got {len(arrays)}"
        )
    total = None
    for layer, arr in zip(bank.layers, arrays):
        part = score_layer_batch_loo(layer, np.asarray(arr, dtype=np.float64))
        total = part if total is None else total + part
    return total
