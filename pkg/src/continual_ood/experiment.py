"""Experiment driver: continual runs, trial averaging, ablations, reports.

A run executes the T-step protocol over a planned deployment stream,
evaluates the current scorer on the held-out test split at every step
(including t=0), and aggregates the step curves into time-normalized
areas. Repeated trials differ only in their seed.
"""

import dataclasses
import json
import os
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datastreams import FeatureSet, build_stream, materialize_batch
from .detector import KNN_EUCLIDEAN, MAHAAD, MKNN, fit_detector, score_batch
from .engine import (
    EngineState,
    ExperimentConfig,
    combined_scores,
    init,
    pseudo_label,
    step,
)
from .errors import ConfigError, DataError
from .fewshot import fit_fewshot, score_fewshot_batch
from .checkpoint import save_checkpoint
from .metrics import MetricCurve, auc, fpr_at_tpr, time_area

UOOD_VARIANTS = {"knn": KNN_EUCLIDEAN, "mahaad": MAHAAD, "mknn": MKNN}
FEWSHOT_VARIANTS = {
    "fs-knn": (KNN_EUCLIDEAN, 1.0),
    "mdiff": (MAHAAD, 1.0),
    "s-maha": (MAHAAD, None),
    "s-mknn": (MKNN, None),
}


@dataclass(frozen=True)
class StepMetrics:
    t: int
    fpr95: float
    auc: float
    alpha: float
    lambda_mean: float
    lambdas: tuple
    confusion: dict  # tp/fp/tn/fn of deploy pseudo-labels vs ground truth
    wall_clock_s: float


@dataclass(frozen=True)
class TrialResult:
    seed: int
    steps: tuple
    auf: float
    aua: float

    def curve(self, field: str) -> MetricCurve:
        return MetricCurve(
            timesteps=np.array([s.t for s in self.steps]),
            values=np.array([getattr(s, field) for s in self.steps]),
        )


@dataclass(frozen=True)
class RunReport:
    config: ExperimentConfig
    trials: tuple
    auf_mean: float
    auf_std: float
    aua_mean: float
    aua_std: float

    def mean_curve(self, field: str) -> np.ndarray:
        return np.mean(
            [[getattr(s, field) for s in trial.steps] for trial in self.trials],
            axis=0,
        )


def _confusion(pseudo: np.ndarray, truth: np.ndarray) -> dict:
    pseudo = np.asarray(pseudo, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    return {
        "tp": int(np.sum(pseudo & truth)),
        "fp": int(np.sum(pseudo & ~truth)),
        "tn": int(np.sum(~pseudo & ~truth)),
        "fn": int(np.sum(~pseudo & truth)),
    }


def _evaluate(state: EngineState, test_id: FeatureSet, test_ood: FeatureSet):
    id_scores = combined_scores(state, test_id)
    ood_scores = combined_scores(state, test_ood)
    return fpr_at_tpr(id_scores, ood_scores, 0.95), auc(id_scores, ood_scores)


def run_trial(
    config: ExperimentConfig,
    train: FeatureSet,
    id_pool: FeatureSet,
    ood_pool: FeatureSet,
    checkpoint_dir=None,
) -> TrialResult:
    """One seeded T-step run, evaluated at every timestep."""
    plan = build_stream(
        id_pool, ood_pool, config.T, config.K, config.pi, seed=config.seed
    )
    if plan.test_id_indices.size == 0 or plan.test_ood_indices.size == 0:
        raise DataError("pools leave no held-out test samples after the stream")
    test_id = id_pool.subset(plan.test_id_indices).features_only()
    test_ood = ood_pool.subset(plan.test_ood_indices).features_only()
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)

    steps = []
    t_start = time.perf_counter()
    state = init(train.features_only(), config)
    fpr, roc = _evaluate(state, test_id, test_ood)
    steps.append(
        StepMetrics(
            t=0,
            fpr95=fpr,
            auc=roc,
            alpha=state.alpha,
            lambda_mean=float(np.mean(state.fewshot.lambdas)),
            lambdas=tuple(float(v) for v in state.fewshot.lambdas),
            confusion=_confusion(np.zeros(0), np.zeros(0)),
            wall_clock_s=time.perf_counter() - t_start,
        )
    )
    if checkpoint_dir is not None:
        save_checkpoint(state, os.path.join(checkpoint_dir, "checkpoint_0000.oodc"))

    truth_so_far = np.zeros(0, dtype=np.uint8)
    static_state = state
    static_deploy = None
    for t in range(1, config.T + 1):
        t_start = time.perf_counter()
        batch, truth = materialize_batch(plan, id_pool, ood_pool, t - 1)
        truth_so_far = np.concatenate([truth_so_far, truth])
        if config.static:
            # Baseline: never update; labels come from the frozen scorer.
            static_deploy = (
                batch
                if static_deploy is None
                else FeatureSet.concat([static_deploy, batch])
            )
            pseudo = pseudo_label(
                combined_scores(static_state, static_deploy), static_state.threshold
            )
            fpr, roc = _evaluate(static_state, test_id, test_ood)
            alpha = 0.0
            lambdas = static_state.fewshot.lambdas
            ckpt_state = static_state
        else:
            state = step(state, batch)
            pseudo = state.deploy_labels
            fpr, roc = _evaluate(state, test_id, test_ood)
            alpha = state.alpha
            lambdas = state.fewshot.lambdas
            ckpt_state = state
        steps.append(
            StepMetrics(
                t=t,
                fpr95=fpr,
                auc=roc,
                alpha=alpha,
                lambda_mean=float(np.mean(lambdas)),
                lambdas=tuple(float(v) for v in lambdas),
                confusion=_confusion(pseudo, truth_so_far),
                wall_clock_s=time.perf_counter() - t_start,
            )
        )
        if checkpoint_dir is not None:
            save_checkpoint(
                ckpt_state, os.path.join(checkpoint_dir, f"checkpoint_{t:04d}.oodc")
            )

    trial = TrialResult(seed=config.seed, steps=tuple(steps), auf=np.nan, aua=np.nan)
    return dataclasses.replace(
        trial,
        auf=time_area(trial.curve("fpr95")),
        aua=time_area(trial.curve("auc")),
    )


def run_experiment(
    config: ExperimentConfig,
    train: FeatureSet,
    id_pool: FeatureSet,
    ood_pool: FeatureSet,
    out_dir=None,
    trials: int = 1,
) -> RunReport:
    """Run ``trials`` seeded repetitions and aggregate; optionally write files."""
    if trials < 1:
        raise ConfigError(f"trial count must be at least 1, got {trials}")
    results = []
    for i in range(trials):
        trial_config = dataclasses.replace(config, seed=config.seed + i)
        ckpt_dir = None
        if out_dir is not None:
            ckpt_dir = os.path.join(out_dir, f"trial_{i:02d}")
        results.append(run_trial(trial_config, train, id_pool, ood_pool, ckpt_dir))
    aufs = np.array([r.auf for r in results])
    auas = np.array([r.aua for r in results])
    report = RunReport(
        config=config,
        trials=tuple(results),
        auf_mean=float(aufs.mean()),
        auf_std=float(aufs.std()),
        aua_mean=float(auas.mean()),
        aua_std=float(auas.std()),
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_atomic(os.path.join(out_dir, "curves.csv"), _curves_csv(report))
        _write_atomic(
            os.path.join(out_dir, "report.json"),
            json.dumps(report_to_dict(report), indent=2) + "\n",
        )
    return report


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _curves_csv(report: RunReport) -> str:
    lines = ["step,fpr95,auc,alpha,lambda_mean"]
    fpr = report.mean_curve("fpr95")
    roc = report.mean_curve("auc")
    alpha = report.mean_curve("alpha")
    lam = report.mean_curve("lambda_mean")
    for t in range(len(fpr)):
        lines.append(
            f"{t},{_fmt(fpr[t])},{_fmt(roc[t])},{_fmt(alpha[t])},{_fmt(lam[t])}"
        )
    return "\n".join(lines) + "\n"


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def report_to_dict(report: RunReport) -> dict:
    return {
        "config": dataclasses.asdict(report.config),
        "auf_mean": report.auf_mean,
        "auf_std": report.auf_std,
        "aua_mean": report.aua_mean,
        "aua_std": report.aua_std,
        "trials": [
            {
                "seed": trial.seed,
                "auf": trial.auf,
                "aua": trial.aua,
                "steps": [dataclasses.asdict(s) for s in trial.steps],
            }
            for trial in report.trials
        ],
    }


# ---------------------------------------------------------------------------
# Scoring-function ablations


def _fewshot_auc(
    config: ExperimentConfig,
    variant: str,
    fixed_lambda,
    train: FeatureSet,
    id_pool: FeatureSet,
    ood_pool: FeatureSet,
    seed: int,
) -> float:
    """AUC of a few-shot variant given n_shot true OOD samples."""
    rng = np.random.default_rng(seed)
    shots = rng.choice(ood_pool.n, size=config.n_shot, replace=False)
    rest = np.setdiff1d(np.arange(ood_pool.n), shots)
    d_out = ood_pool.subset(shots).features_only() if config.n_shot else None
    learner = fit_fewshot(
        train.features_only(),
        d_out,
        k=min(config.k, train.n),
        gamma=config.gamma,
        M=config.M,
        seed=seed,
        variant=variant,
        fixed_lambda=fixed_lambda,
    )
    id_scores = score_fewshot_batch(learner, id_pool.features_only())
    ood_scores = score_fewshot_batch(learner, ood_pool.subset(rest).features_only())
    return auc(id_scores, ood_scores)


def ablate_experiment(
    config: ExperimentConfig,
    train: FeatureSet,
    id_pool: FeatureSet,
    ood_pool: FeatureSet,
    variants: Sequence[str],
    trials: int = 1,
    out_dir=None,
):
    """Compare scoring variants on one dataset; returns rows of results.

    Static-detector variants score the pools directly and are
    deterministic. Few-shot variants draw ``config.n_shot`` true OOD
    samples per trial and report the mean and spread over trials.
    """
    rows = []
    for name in variants:
        if name in UOOD_VARIANTS:
            bank = fit_detector(
                train.features_only(),
                k=min(config.k, train.n),
                variant=UOOD_VARIANTS[name],
            )
            value = auc(
                score_batch(bank, id_pool.features_only()),
                score_batch(bank, ood_pool.features_only()),
            )
            rows.append(
                {"variant": name, "family": "uood", "auc_mean": value, "auc_std": 0.0}
            )
        elif name in FEWSHOT_VARIANTS:
            detector_variant, fixed_lambda = FEWSHOT_VARIANTS[name]
            values = np.array(
                [
                    _fewshot_auc(
                        config,
                        detector_variant,
                        fixed_lambda,
                        train,
                        id_pool,
                        ood_pool,
                        seed=config.seed + i,
                    )
                    for i in range(trials)
                ]
            )
            rows.append(
                {
                    "variant": name,
                    "family": "fewshot",
                    "auc_mean": float(values.mean()),
                    "auc_std": float(values.std()),
                }
            )
        else:
            known = sorted(UOOD_VARIANTS) + sorted(FEWSHOT_VARIANTS)
            raise ConfigError(f"unknown variant {name!r}; choose from {known}")
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["variant,family,auc_mean,auc_std"]
        for row in rows:
            lines.append(
                f"{row['variant']},{row['family']},"
                f"{_fmt(row['auc_mean'])},{_fmt(row['auc_std'])}"
            )
        _write_atomic(os.path.join(out_dir, "ablation.csv"), "\n".join(lines) + "\n")
    return rows
