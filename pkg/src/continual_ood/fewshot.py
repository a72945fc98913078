"""Confidence-scaled few-shot detector: twin banks and bootstrap scaling.

The learner scores a sample as (distance to the in-distribution bank)
minus lambda times (distance to the out-distribution bank). Each layer's
lambda is the capped ratio of bootstrap covariance variabilities of the
two training sets, so a poorly-estimated out-distribution contributes
little and an empty one contributes nothing.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datastreams import FeatureSet
from .detector import (
    MKNN,
    VARIANTS,
    DetectorBank,
    fit_detector,
    score_batch,
    score_layer,
    score_layer_batch,
    score_layer_batch_loo,
)
from .errors import ConfigError, EmptyDatasetError, ShapeError

_ROLE_CODES = {"in": 0, "out": 1}
_GLOBAL_LAYER = 1 << 16  # pseudo layer index for concatenated-feature lambdas


def bootstrap_seed(seed: int, layer: int, role: str) -> int:
    """Deterministic per-layer, per-role seed for bootstrap resampling."""
    entropy = (int(seed), int(layer), _ROLE_CODES[role])
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def bootstrap_uncertainty(data: np.ndarray, M: int, seed: int) -> float:
    """Variability of population covariances over M bootstrap resamples.

    Replicate m draws N indices with replacement from a generator seeded
    by (seed, m), so results are independent of evaluation order. Returns
    the mean squared Frobenius deviation of the resample covariances from
    their average, divided by d^2. Empty input returns +inf (an absent
    out-distribution carries unbounded uncertainty).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError(f"expected a 2-D sample matrix, got shape {data.shape}")
    n, d = data.shape
    if n == 0:
        return math.inf
    if M < 1:
        raise ConfigError(f"bootstrap replicate count must be >= 1, got {M}")
    covs = np.empty((M, d, d), dtype=np.float64)
    for m in range(M):
        rng = np.random.default_rng((int(seed), m))
        rows = data[rng.integers(0, n, size=n)]
        centered = rows - rows.mean(axis=0)
        covs[m] = centered.T @ centered / n
    mean_cov = covs.mean(axis=0)
    return float(np.sum((covs - mean_cov) ** 2) / (M * d * d))


def compute_lambda(u_in: float, u_out: float, gamma: float) -> float:
    """Capped uncertainty ratio min(1, gamma * u_in / u_out).

    An infinite ``u_out`` (no out-distribution data) gives 0; a zero
    ``u_out`` with positive ``u_in`` gives 1. A zero ``u_in`` gives 0
    regardless of ``u_out``, extending gamma*0/x = 0 to x = 0.
    """
    if gamma <= 0.0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    if u_in < 0.0 or not math.isfinite(u_in):
        raise ConfigError(f"u_in must be finite and nonnegative, got {u_in}")
    if math.isinf(u_out):
        return 0.0
    if u_in == 0.0:
        return 0.0
    if u_out == 0.0:
        return 1.0
    return min(1.0, gamma * u_in / u_out)


@dataclass(frozen=True)
class FewShotLearner:
    """Twin detector banks plus per-layer mixing factors."""

    in_bank: DetectorBank
    out_bank: Optional[DetectorBank]
    lambdas: np.ndarray  # (L,)
    gamma: float
    M: int
    seed: int

    @property
    def n_layers(self) -> int:
        return self.in_bank.n_layers


def fit_fewshot(
    d_in: FeatureSet,
    d_out: Optional[FeatureSet],
    k: int,
    gamma: float,
    M: int,
    seed: int,
    variant: str = MKNN,
    fixed_lambda: Optional[float] = None,
    global_lambda: bool = False,
    u_in: Optional[np.ndarray] = None,
) -> FewShotLearner:
    """Fit twin banks on (d_in, d_out) and derive the per-layer lambdas.

    The out bank's neighbor count is clamped to the out-set size. Lambdas
    come from per-layer bootstrap uncertainties seeded through
    :func:`bootstrap_seed`, unless ``u_in`` supplies cached in-set values,
    ``global_lambda`` requests a single ratio over concatenated features,
    or ``fixed_lambda`` overrides the ratio entirely.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown detector variant {variant!r}")
    if d_in is None or d_in.n == 0:
        raise EmptyDatasetError("the in-distribution set must be nonempty")
    if d_out is not None and d_out.n == 0:
        d_out = None
    if d_out is not None and (
        d_out.layer_names != d_in.layer_names or d_out.dims != d_in.dims
    ):
        raise ShapeError("in/out FeatureSets have mismatching layers")
    n_layers = d_in.n_layers
    in_bank = fit_detector(d_in, k=min(k, d_in.n), variant=variant)
    if d_out is None:
        return FewShotLearner(
            in_bank=in_bank,
            out_bank=None,
            lambdas=np.zeros(n_layers),
            gamma=gamma,
            M=M,
            seed=seed,
        )
    out_bank = fit_detector(d_out, k=min(k, d_out.n), variant=variant)
    if fixed_lambda is not None:
        if not 0.0 <= fixed_lambda <= 1.0:
            raise ConfigError(f"fixed lambda must be in [0, 1], got {fixed_lambda}")
        lambdas = np.full(n_layers, float(fixed_lambda))
    elif global_lambda:
        cat_in = d_in.concat_layers()
        cat_out = d_out.concat_layers()
        u_i = bootstrap_uncertainty(cat_in, M, bootstrap_seed(seed, _GLOBAL_LAYER, "in"))
        u_o = bootstrap_uncertainty(cat_out, M, bootstrap_seed(seed, _GLOBAL_LAYER, "out"))
        lambdas = np.full(n_layers, compute_lambda(u_i, u_o, gamma))
    else:
        lambdas = np.empty(n_layers)
        for li in range(n_layers):
            if u_in is not None:
                u_i = float(u_in[li])
            else:
                u_i = bootstrap_uncertainty(
                    d_in.layers[li], M, bootstrap_seed(seed, li, "in")
                )
            u_o = bootstrap_uncertainty(
                d_out.layers[li], M, bootstrap_seed(seed, li, "out")
            )
            lambdas[li] = compute_lambda(u_i, u_o, gamma)
    return FewShotLearner(
        in_bank=in_bank,
        out_bank=out_bank,
        lambdas=lambdas,
        gamma=gamma,
        M=M,
        seed=seed,
    )


def score_fewshot(learner: FewShotLearner, x) -> float:
    """Layer sum of in-scores minus lambda-scaled out-scores; may be negative."""
    if len(x) != learner.n_layers:
        raise ShapeError(f"expected {learner.n_layers} layer vectors, got {len(x)}")
    total = 0.0
    for li in range(learner.n_layers):
        part = score_layer(learner.in_bank.layers[li], x[li])
        if learner.out_bank is not None:
            part -= learner.lambdas[li] * score_layer(learner.out_bank.layers[li], x[li])
        total += part
    return float(total)


def score_fewshot_batch(learner: FewShotLearner, features) -> np.ndarray:
    """Vectorized :func:`score_fewshot` over a FeatureSet or layer matrices."""
    arrays = features.layers if isinstance(features, FeatureSet) else features
    if len(arrays) != learner.n_layers:
        raise ShapeError(f"expected {learner.n_layers} layer matrices, got {len(arrays)}")
    if learner.out_bank is None:
        return score_batch(learner.in_bank, arrays)
    total = None
    for li in range(learner.n_layers):
        arr = np.asarray(arrays[li], dtype=np.float64)
        part = score_layer_batch(learner.in_bank.layers[li], arr)
        part = part - learner.lambdas[li] * score_layer_batch(
            learner.out_bank.layers[li], arr
        )
        total = part if total is None else total + part
    return total


def score_fewshot_batch_loo(learner: FewShotLearner, features) -> np.ndarray:
    """Scores for rows that live inside the learner's in-bank.

    The in-score drops the exact-zero self match (see
    :func:`continual_ood.detector.score_layer_batch_loo`); the out-score is
    unaffected because these rows are never in the out bank.
    """
    arrays = features.layers if isinstance(features, FeatureSet) else features
    if len(arrays) != learner.n_layers:
        raise ShapeError(f"expected {learner.n_layers} layer matrices, got {len(arrays)}")
    total = None
    for li in range(learner.n_layers):
        arr = np.asarray(arrays[li], dtype=np.float64)
        part = score_layer_batch_loo(learner.in_bank.layers[li], arr)
        if learner.out_bank is not None:
            part = part - learner.lambdas[li] * score_layer_batch(
                learner.out_bank.layers[li], arr
            )
        total = part if total is None else total + part
    return total
