"""The continual protocol: pseudo-labeling, refitting, mixing, relabeling.

State evolves through pure-looking transitions: ``init`` builds the base
detector on the training set, and each ``step`` absorbs one unlabeled
deployment batch. The combined scorer is a convex mix of the standardized
few-shot and strong-learner scores; its weight grows with the number of
pseudo-OOD samples seen so far.

The engine never accepts ground-truth labels: ``init`` and ``step``
reject labeled FeatureSets outright.
"""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datastreams import FeatureSet
from .detector import MKNN, VARIANTS, DetectorBank, fit_detector
from .errors import ConfigError, EmptyDatasetError, InvalidDataError, ShapeError
from .fewshot import (
    FewShotLearner,
    bootstrap_seed,
    bootstrap_uncertainty,
    fit_fewshot,
    score_fewshot_batch,
    score_fewshot_batch_loo,
)
from .strong import BinaryLearner, StrongConfig, score_strong_batch, train_strong

_TAG_FEWSHOT = 1
_TAG_STRONG = 2
_TAG_U_IN = 3


def derive_seed(seed: int, tag: int, t: int) -> int:
    """Stable sub-seed for one component at one timestep."""
    return int(np.random.SeedSequence((int(seed), int(tag), int(t))).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a continual run; field names double as config-file keys."""

    T: int = 5
    K: int = 100
    pi: float = 0.1
    B: int = 100  # pseudo-OOD count at which the mix saturates
    gamma: float = 5.0
    tau: float = 95.0
    k: int = 2
    M: int = 16
    seed: int = 0
    variant: str = MKNN
    fixed_lambda: Optional[float] = None
    global_lambda: bool = False
    recompute_u_in: bool = False
    literal_alpha: bool = False
    static: bool = False  # runner-level: never update past the base detector
    learning_rate: float = 1e-2
    epochs: int = 10
    batch_size: int = 256
    oversample: int = 10
    n_shot: int = 5  # few-shot protocol size used by the ablation runner

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError(f"T must be at least 1, got {self.T}")
        if self.K < 1:
            raise ConfigError(f"K must be at least 1, got {self.K}")
        if self.B < 1:
            raise ConfigError(f"B must be at least 1, got {self.B}")
        if not 0.0 <= self.pi <= 1.0:
            raise ConfigError(f"pi must lie in [0, 1], got {self.pi}")
        if not 0.0 < self.tau < 100.0:
            raise ConfigError(f"tau must lie in (0, 100), got {self.tau}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.k < 1:
            raise ConfigError(f"k must be at least 1, got {self.k}")
        if self.M < 1:
            raise ConfigError(f"M must be at least 1, got {self.M}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.n_shot < 0:
            raise ConfigError(f"n_shot must be nonnegative, got {self.n_shot}")

    def strong_config(self) -> StrongConfig:
        return StrongConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            oversample=self.oversample,
        )


@dataclass(frozen=True)
class EngineState:
    """Everything the continual detector knows at time t."""

    config: ExperimentConfig
    t: int
    train: FeatureSet
    deploy: FeatureSet
    deploy_labels: np.ndarray  # (n_deploy,) uint8 pseudo-labels, 0=ID 1=OOD
    base: DetectorBank
    fewshot: FewShotLearner
    strong: BinaryLearner
    alpha: float
    threshold: float
    fewshot_stats: tuple  # (mean, std) of few-shot scores over D_t
    strong_stats: tuple  # (mean, std) of strong scores over D_t
    u_in_cache: Optional[tuple]  # per-layer U(D_in) frozen at t=0

    @property
    def n_out(self) -> int:
        return int(np.sum(self.deploy_labels == 1))

    def d_in(self) -> FeatureSet:
        """Training set plus deploy samples currently labeled ID."""
        if self.deploy.n == 0:
            return self.train
        id_part = self.deploy.subset(np.flatnonzero(self.deploy_labels == 0))
        if id_part.n == 0:
            return self.train
        return FeatureSet.concat([self.train, id_part])

    def d_out(self) -> Optional[FeatureSet]:
        """Deploy samples currently labeled OOD, or None."""
        if self.deploy.n == 0:
            return None
        out_part = self.deploy.subset(np.flatnonzero(self.deploy_labels == 1))
        return out_part if out_part.n > 0 else None


def compute_threshold(scores, tau: float) -> float:
    """tau-th percentile with linear interpolation between order statistics."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyDatasetError("cannot take a percentile of zero scores")
    return float(np.percentile(scores, tau, method="linear"))


def pseudo_label(scores, threshold: float) -> np.ndarray:
    """1 (OOD) where score strictly exceeds the threshold, else 0 (ID)."""
    scores = np.asarray(scores, dtype=np.float64)
    return (scores > threshold).astype(np.uint8)


def mixing_alpha(n_out: int, B: int, literal: bool = False) -> float:
    """Mixing weight from the pseudo-OOD count.

    Default reading: min(1, n_out / B), saturating once B pseudo-OOD
    samples have been seen. The ``literal`` flag restores min(1, B * n_out),
    which saturates after a single sample for any B >= 1.
    """
    if n_out < 0 or B < 1:
        raise ConfigError("need n_out >= 0 and B >= 1")
    if literal:
        return min(1.0, float(B) * n_out)
    return min(1.0, n_out / B)


def standardize(scores, stats) -> np.ndarray:
    """Z-score against (mean, std); a zero std maps everything to zero."""
    scores = np.asarray(scores, dtype=np.float64)
    mean, std = stats
    if std < 0:
        raise ConfigError(f"standard deviation must be nonnegative, got {std}")
    if std == 0.0:
        return np.zeros_like(scores)
    return (scores - mean) / std


def _score_stats(scores: np.ndarray) -> tuple:
    return (float(np.mean(scores)), float(np.std(scores)))


def combined_scores(state: EngineState, features) -> np.ndarray:
    """Convex mix of the standardized few-shot and strong scores."""
    fs = standardize(score_fewshot_batch(state.fewshot, features), state.fewshot_stats)
    st = standardize(score_strong_batch(state.strong, features), state.strong_stats)
    return (1.0 - state.alpha) * fs + state.alpha * st


def combined_score(state: EngineState, x) -> float:
    """Combined score of a single sample given as per-layer vectors."""
    arrays = [np.asarray(v, dtype=np.float64)[None, :] for v in x]
    return float(combined_scores(state, arrays)[0])


def _combined_train_scores(state: EngineState) -> np.ndarray:
    """Combined scores of the training rows for threshold calibration.

    Training rows sit inside the few-shot in-bank, so the in-score drops
    their exact-zero self match; otherwise the train percentile would
    under-estimate scores of fresh in-distribution samples by roughly a
    factor (k-1)/k and flood the pseudo-labels with false OOD.
    """
    fs = standardize(
        score_fewshot_batch_loo(state.fewshot, state.train), state.fewshot_stats
    )
    st = standardize(score_strong_batch(state.strong, state.train), state.strong_stats)
    return (1.0 - state.alpha) * fs + state.alpha * st


def _reject_labels(features: FeatureSet, what: str) -> FeatureSet:
    if features.labels is not None:
        raise InvalidDataError(
            f"{what} must not carry ground-truth labels; strip them first"
        )
    return features


def init(train: FeatureSet, config: ExperimentConfig) -> EngineState:
    """Fit the base detector and produce the t=0 state.

    The combined scorer at t=0 is the standardized base score: the mix
    weight is zero and the few-shot learner has no out-distribution yet.
    """
    _reject_labels(train, "the training set")
    if train.n == 0:
        raise EmptyDatasetError("the training set must be nonempty")
    k_eff = min(config.k, train.n)
    base = fit_detector(train, k=k_eff, variant=config.variant)
    fewshot = FewShotLearner(
        in_bank=base,
        out_bank=None,
        lambdas=np.zeros(train.n_layers),
        gamma=config.gamma,
        M=config.M,
        seed=derive_seed(config.seed, _TAG_FEWSHOT, 0),
    )
    strong = train_strong(train, None, config.strong_config(), prev=None)
    u_in_cache = None
    if not config.recompute_u_in and config.fixed_lambda is None and not config.global_lambda:
        seed_u = derive_seed(config.seed, _TAG_U_IN, 0)
        u_in_cache = tuple(
            bootstrap_uncertainty(layer, config.M, bootstrap_seed(seed_u, li, "in"))
            for li, layer in enumerate(train.layers)
        )
    fs_scores = score_fewshot_batch(fewshot, train)
    st_scores = score_strong_batch(strong, train)
    state = EngineState(
        config=config,
        t=0,
        train=train,
        deploy=FeatureSet.empty_like(train),
        deploy_labels=np.zeros(0, dtype=np.uint8),
        base=base,
        fewshot=fewshot,
        strong=strong,
        alpha=0.0,
        threshold=np.nan,
        fewshot_stats=_score_stats(fs_scores),
        strong_stats=_score_stats(st_scores),
        u_in_cache=u_in_cache,
    )
    threshold = compute_threshold(_combined_train_scores(state), config.tau)
    return dataclasses.replace(state, threshold=threshold)


def step(state: EngineState, batch: FeatureSet) -> EngineState:
    """Absorb one deployment batch and return the state at time t+1.

    In order: the new batch is pseudo-labeled with the previous scorer
    and threshold; the few-shot and strong learners are refit on the
    induced split; score statistics are refreshed over everything seen;
    the mix weight follows the pseudo-OOD count; the threshold is re-read
    off the training scores; and finally all deployment samples are
    relabeled with the new scorer for the next step.
    """
    _reject_labels(batch, "a deployment batch")
    if batch.layer_names != state.train.layer_names or batch.dims != state.train.dims:
        raise ShapeError("batch layers do not match the training layers")
    config = state.config
    t = state.t + 1

    new_labels = pseudo_label(combined_scores(state, batch), state.threshold)
    deploy = (
        batch
        if state.deploy.n == 0
        else FeatureSet.concat([state.deploy, batch])
    )
    labels = np.concatenate([state.deploy_labels, new_labels])

    interim = dataclasses.replace(state, t=t, deploy=deploy, deploy_labels=labels)
    d_in = interim.d_in()
    d_out = interim.d_out()

    fewshot = fit_fewshot(
        d_in,
        d_out,
        k=min(config.k, state.train.n),
        gamma=config.gamma,
        M=config.M,
        seed=derive_seed(config.seed, _TAG_FEWSHOT, t),
        variant=config.variant,
        fixed_lambda=config.fixed_lambda,
        global_lambda=config.global_lambda,
        u_in=state.u_in_cache,
    )
    strong = train_strong(
        d_in,
        d_out,
        config.strong_config(),
        prev=state.strong,
        seed=derive_seed(config.seed, _TAG_STRONG, t),
    )

    everything = FeatureSet.concat([state.train, deploy])
    fewshot_stats = _score_stats(score_fewshot_batch(fewshot, everything))
    strong_stats = _score_stats(score_strong_batch(strong, everything))
    alpha = mixing_alpha(int(np.sum(labels == 1)), config.B, config.literal_alpha)

    new_state = EngineState(
        config=config,
        t=t,
        train=state.train,
        deploy=deploy,
        deploy_labels=labels,
        base=state.base,
        fewshot=fewshot,
        strong=strong,
        alpha=alpha,
        threshold=np.nan,
        fewshot_stats=fewshot_stats,
        strong_stats=strong_stats,
        u_in_cache=state.u_in_cache,
    )
    threshold = compute_threshold(_combined_train_scores(new_state), config.tau)
    new_state = dataclasses.replace(new_state, threshold=threshold)
    relabeled = pseudo_label(combined_scores(new_state, deploy), threshold)
    return dataclasses.replace(new_state, deploy_labels=relabeled)
