"""Warm-startable binary learner over concatenated layer features.

The reference implementation is logistic regression trained by mini-batch
gradient descent on standardized features, with out-distribution rows
oversampled. The continual engine only relies on this module's train and
score entry points, so heavier learners can be swapped in behind them.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .datastreams import FeatureSet
from .errors import ConfigError, DivergenceError, EmptyDatasetError, ShapeError


@dataclass(frozen=True)
class StrongConfig:
    learning_rate: float = 1e-2
    epochs: int = 10
    batch_size: int = 256
    oversample: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epoch count must be nonnegative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")
        if self.oversample < 1:
            raise ConfigError(f"oversampling factor must be >= 1, got {self.oversample}")


@dataclass(frozen=True)
class BinaryLearner:
    """Affine weights (bias last) plus the feature standardization stats."""

    weights: np.ndarray  # (D + 1,), bias at index -1
    feat_mean: np.ndarray  # (D,)
    feat_std: np.ndarray  # (D,), zeros replaced by 1
    config: StrongConfig

    @property
    def n_features(self) -> int:
        return self.weights.shape[0] - 1


def _standardize_features(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


def _bce_loss(z: np.ndarray, y: np.ndarray) -> float:
    # mean of log(1 + e^z) - y*z, the numerically stable BCE on logits
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def train_strong(
    d_in: FeatureSet,
    d_out: Optional[FeatureSet],
    config: StrongConfig,
    prev: Optional[BinaryLearner] = None,
    seed: int = 0,
) -> BinaryLearner:
    """Fit the binary learner on concatenated features (OOD labeled 1).

    Features are standardized per dimension with in-set statistics. The
    training pool is the in-set followed by each out row repeated
    ``oversample`` times; every epoch shuffles the pool with a seeded
    generator and applies one gradient step per mini-batch. With ``prev``
    given, optimization starts from its weights. Without out samples the
    previous learner is returned unchanged (or a zero-weight one built).
    """
    if d_in is None or d_in.n == 0:
        raise EmptyDatasetError("the in-distribution set must be nonempty")
    x_in = d_in.concat_layers()
    n_features = x_in.shape[1]
    feat_mean = x_in.mean(axis=0)
    feat_std = x_in.std(axis=0)
    feat_std = np.where(feat_std == 0.0, 1.0, feat_std)

    if d_out is None or d_out.n == 0:
        if prev is not None:
            return prev
        return BinaryLearner(
            weights=np.zeros(n_features + 1),
            feat_mean=feat_mean,
            feat_std=feat_std,
            config=config,
        )

    x_out = d_out.concat_layers()
    if x_out.shape[1] != n_features:
        raise ShapeError("in/out sets have mismatching feature dimensions")
    if prev is not None:
        if prev.n_features != n_features:
            raise ShapeError(
                f"previous learner has {prev.n_features} features, need {n_features}"
            )
        weights = prev.weights.copy()
    else:
        weights = np.zeros(n_features + 1)

    xs = np.vstack(
        [
            _standardize_features(x_in, feat_mean, feat_std),
            np.repeat(
                _standardize_features(x_out, feat_mean, feat_std),
                config.oversample,
                axis=0,
            ),
        ]
    )
    y = np.concatenate(
        [np.zeros(x_in.shape[0]), np.ones(x_out.shape[0] * config.oversample)]
    )
    n_pool = xs.shape[0]
    rng = np.random.default_rng(seed)
    w = weights[:-1]
    b = weights[-1]
    # Overflow shows up as a non-finite loss and raises below; silence the
    # intermediate numpy warnings on that path.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            order = rng.permutation(n_pool)
            for start in range(0, n_pool, config.batch_size):
                idx = order[start : start + config.batch_size]
                xb, yb = xs[idx], y[idx]
                z = xb @ w + b
                p = expit(z)
                resid = p - yb
                w = w - config.learning_rate * (xb.T @ resid) / idx.size
                b = b - config.learning_rate * resid.mean()
            loss = _bce_loss(xs @ w + b, y)
            if not np.isfinite(loss) or not np.all(np.isfinite(w)):
                raise DivergenceError(
                    f"training loss became non-finite at epoch {epoch}", epoch=epoch
                )
    return BinaryLearner(
        weights=np.concatenate([w, [b]]),
        feat_mean=feat_mean,
        feat_std=feat_std,
        config=config,
    )


def score_strong_batch(learner: BinaryLearner, features) -> np.ndarray:
    """Sigmoid scores in (0, 1).

    Accepts a FeatureSet, a sequence of per-layer matrices, or one
    already-concatenated (m, D) matrix.
    """
    if isinstance(features, FeatureSet):
        x = features.concat_layers()
    elif isinstance(features, (list, tuple)):
        x = np.hstack([np.asarray(a, dtype=np.float64) for a in features])
    else:
        x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != learner.n_features:
        raise ShapeError(
            f"expected (m, {learner.n_features}) features, got shape {x.shape}"
        )
    xs = _standardize_features(x, learner.feat_mean, learner.feat_std)
    return expit(xs @ learner.weights[:-1] + learner.weights[-1])


def score_strong(learner: BinaryLearner, x) -> float:
    """Score one sample given as per-layer vectors or one flat vector."""
    if isinstance(x, np.ndarray) and x.ndim == 1:
        flat = x.astype(np.float64)
    else:
        flat = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in x])
    return float(score_strong_batch(learner, flat[None, :])[0])


def with_weights(learner: BinaryLearner, weights: np.ndarray) -> BinaryLearner:
    """A copy of ``learner`` carrying different affine weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != learner.weights.shape:
        raise ShapeError("replacement weights have the wrong length")
    return replace(learner, weights=weights)
