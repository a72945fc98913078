import json

import numpy as np
import pytest

from continual_ood.checkpoint import load_checkpoint
from continual_ood.engine import ExperimentConfig
from continual_ood.errors import ConfigError
from continual_ood.experiment import (
    ablate_experiment,
    run_experiment,
    run_trial,
)
from continual_ood.metrics import MetricCurve, time_area
from continual_ood.presets import heavy_tail_train, identical, separated_8d


def small_benchmark():
    return separated_8d(seed=2, n_train=300, n_id_pool=400, n_ood_pool=200)


def small_config(**overrides):
    defaults = dict(T=3, K=40, pi=0.25, B=100, gamma=5.0, tau=95.0, k=2, M=8, seed=9)
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRun:
    def test_structural_t5(self):
        train, id_pool, ood_pool = small_benchmark()
        report = run_experiment(small_config(T=5), train, id_pool, ood_pool)
        assert len(report.trials) == 1
        assert [s.t for s in report.trials[0].steps] == [0, 1, 2, 3, 4, 5]

    def test_report_consistent_with_curves(self):
        train, id_pool, ood_pool = small_benchmark()
        report = run_experiment(small_config(), train, id_pool, ood_pool, trials=2)
        for trial in report.trials:
            assert trial.auf == pytest.approx(
                time_area(trial.curve("fpr95")), abs=1e-12
            )
            assert trial.aua == pytest.approx(time_area(trial.curve("auc")), abs=1e-12)
        assert report.auf_mean == pytest.approx(
            np.mean([t.auf for t in report.trials]), abs=1e-12
        )

    def test_trials_vary_only_seed(self):
        train, id_pool, ood_pool = small_benchmark()
        report = run_experiment(small_config(), train, id_pool, ood_pool, trials=2)
        assert report.trials[0].seed == 9
        assert report.trials[1].seed == 10

    def test_outputs_written_and_identical(self, tmp_path):
        train, id_pool, ood_pool = small_benchmark()
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_experiment(small_config(), train, id_pool, ood_pool, out_dir=out_a)
        run_experiment(small_config(), train, id_pool, ood_pool, out_dir=out_b)
        csv_a = (out_a / "curves.csv").read_bytes()
        csv_b = (out_b / "curves.csv").read_bytes()
        assert csv_a == csv_b
        header = csv_a.decode().splitlines()[0]
        assert header == "step,fpr95,auc,alpha,lambda_mean"
        assert len(csv_a.decode().strip().splitlines()) == 1 + 4  # header + t=0..3

    def test_checkpoints_cover_every_step(self, tmp_path):
        train, id_pool, ood_pool = small_benchmark()
        run_experiment(small_config(), train, id_pool, ood_pool, out_dir=tmp_path)
        trial_dir = tmp_path / "trial_00"
        names = sorted(p.name for p in trial_dir.iterdir())
        assert names == [f"checkpoint_{t:04d}.oodc" for t in range(4)]
        last = load_checkpoint(trial_dir / "checkpoint_0003.oodc")
        assert last.t == 3
        assert last.deploy_labels.size == 3 * 40

    def test_report_json_roundtrips(self, tmp_path):
        train, id_pool, ood_pool = small_benchmark()
        report = run_experiment(
            small_config(), train, id_pool, ood_pool, out_dir=tmp_path
        )
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["aua_mean"] == report.aua_mean
        steps = data["trials"][0]["steps"]
        assert len(steps) == 4
        assert {"t", "fpr95", "auc", "alpha", "lambda_mean", "lambdas", "confusion",
                "wall_clock_s"} <= set(steps[0])
        curve = MetricCurve(
            np.array([s["t"] for s in steps]),
            np.array([s["fpr95"] for s in steps]),
        )
        assert data["trials"][0]["auf"] == pytest.approx(time_area(curve), abs=1e-12)

    def test_pi_zero_alpha_stays_zero(self):
        # Frozen instance, pre-verified: clean streams stay clean.
        train, id_pool, ood_pool = heavy_tail_train(
            seed=5, n_train=1000, n_id_pool=900, n_ood_pool=300
        )
        config = small_config(T=5, K=100, pi=0.0, M=8, seed=5)
        report = run_experiment(config, train, id_pool, ood_pool)
        for step_metrics in report.trials[0].steps:
            assert step_metrics.alpha == 0.0
            assert step_metrics.confusion["fp"] == 0

    def test_static_mode_curve_constant(self):
        train, id_pool, ood_pool = small_benchmark()
        report = run_experiment(
            small_config(static=True, variant="mahaad"), train, id_pool, ood_pool
        )
        aucs = [s.auc for s in report.trials[0].steps]
        assert len(set(aucs)) == 1
        assert all(s.alpha == 0.0 for s in report.trials[0].steps)

    def test_trial_count_validated(self):
        train, id_pool, ood_pool = small_benchmark()
        with pytest.raises(ConfigError):
            run_experiment(small_config(), train, id_pool, ood_pool, trials=0)


class TestAblate:
    def test_single_variant_single_row(self):
        train, id_pool, ood_pool = small_benchmark()
        rows = ablate_experiment(small_config(), train, id_pool, ood_pool, ["mknn"])
        assert len(rows) == 1
        assert rows[0]["variant"] == "mknn"
        assert 0.0 <= rows[0]["auc_mean"] <= 1.0

    def test_unknown_variant_rejected(self):
        train, id_pool, ood_pool = small_benchmark()
        with pytest.raises(ConfigError):
            ablate_experiment(small_config(), train, id_pool, ood_pool, ["sknn"])

    def test_identical_distributions_near_chance(self):
        train, id_pool, ood_pool = identical(seed=4)
        rows = ablate_experiment(
            small_config(),
            train,
            id_pool,
            ood_pool,
            ["knn", "mahaad", "mknn", "fs-knn", "mdiff", "s-maha", "s-mknn"],
            trials=2,
        )
        for row in rows:
            assert abs(row["auc_mean"] - 0.5) <= 0.05, row

    def test_scaled_lambda_beats_mdiff_on_frozen_instance(self):
        from continual_ood.presets import fewshot_aniso

        train, id_pool, ood_pool = fewshot_aniso(seed=3)
        rows = ablate_experiment(
            small_config(n_shot=5, M=16, seed=0),
            train,
            id_pool,
            ood_pool,
            ["mdiff", "s-maha"],
        )
        by_name = {r["variant"]: r["auc_mean"] for r in rows}
        assert by_name["s-maha"] >= by_name["mdiff"]

    def test_csv_written(self, tmp_path):
        train, id_pool, ood_pool = small_benchmark()
        ablate_experiment(
            small_config(), train, id_pool, ood_pool, ["mknn", "mahaad"],
            out_dir=tmp_path,
        )
        lines = (tmp_path / "ablation.csv").read_text().strip().splitlines()
        assert lines[0] == "variant,family,auc_mean,auc_std"
        assert len(lines) == 3


class TestRunTrial:
    def test_tight_pools_still_leave_a_test_split(self, rng):
        # Stream takes 90 of 120 ID and 30 of 40 OOD; the rest is the test set.
        train, id_pool, ood_pool = separated_8d(
            seed=2, n_train=200, n_id_pool=120, n_ood_pool=40
        )
        trial = run_trial(small_config(T=3, K=40, pi=0.25), train, id_pool, ood_pool)
        assert len(trial.steps) == 4
