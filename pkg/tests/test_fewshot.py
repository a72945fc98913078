import math

import numpy as np
import numpy.testing as npt
import pytest

from conftest import featureset
from continual_ood.detector import MAHAAD, fit_detector, score_batch
from continual_ood.errors import EmptyDatasetError
from continual_ood.fewshot import (
    bootstrap_seed,
    bootstrap_uncertainty,
    compute_lambda,
    fit_fewshot,
    score_fewshot,
    score_fewshot_batch,
)
from continual_ood.linalg_stats import fit_gaussian, ledoit_wolf_nu, shrink
from continual_ood.metrics import auc
from continual_ood.presets import fewshot_aniso


def bootstrap_oracle(data, M, seed):
    """Replays the same seeded resamples, but derives U via np.cov."""
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    covs = []
    for m in range(M):
        rng = np.random.default_rng((seed, m))
        rows = data[rng.integers(0, n, size=n)]
        covs.append(np.atleast_2d(np.cov(rows, rowvar=False, bias=True)))
    mean_cov = sum(covs) / M
    return sum(np.linalg.norm(c - mean_cov, "fro") ** 2 for c in covs) / (M * d * d)


class TestBootstrapUncertainty:
    def test_identical_samples_zero(self):
        data = np.tile([2.0, -1.0], (15, 1))
        assert bootstrap_uncertainty(data, M=8, seed=3) == 0.0

    def test_single_replicate_zero(self, rng):
        data = rng.normal(size=(10, 3))
        assert bootstrap_uncertainty(data, M=1, seed=5) == 0.0

    def test_matches_replayed_oracle(self, rng):
        data = rng.normal(size=(20, 2))
        got = bootstrap_uncertainty(data, M=8, seed=17)
        assert abs(got - bootstrap_oracle(data, M=8, seed=17)) <= 1e-12

    def test_empty_returns_infinity(self):
        assert math.isinf(bootstrap_uncertainty(np.empty((0, 4)), M=4, seed=0))

    def test_deterministic(self, rng):
        data = rng.normal(size=(30, 3))
        assert bootstrap_uncertainty(data, 16, 9) == bootstrap_uncertainty(data, 16, 9)


class TestComputeLambda:
    def test_infinite_out_uncertainty(self):
        assert compute_lambda(1.0, math.inf, gamma=5.0) == 0.0

    def test_equal_uncertainties_cap(self):
        assert compute_lambda(1.0, 1.0, gamma=1.0) == 1.0

    def test_direct_ratio(self):
        assert compute_lambda(1.0, 10.0, gamma=5.0) == 0.5

    def test_zero_out_uncertainty(self):
        assert compute_lambda(0.5, 0.0, gamma=2.0) == 1.0

    def test_zero_in_uncertainty(self):
        assert compute_lambda(0.0, 0.0, gamma=2.0) == 0.0
        assert compute_lambda(0.0, 3.0, gamma=2.0) == 0.0

    def test_monotone_in_gamma(self, rng):
        for _ in range(20):
            u_in, u_out = rng.uniform(0.01, 5.0, size=2)
            lams = [compute_lambda(u_in, u_out, g) for g in (0.5, 1.0, 2.0, 8.0)]
            assert all(a <= b for a, b in zip(lams, lams[1:]))


class TestFitFewshot:
    def test_empty_out_scores_like_base(self, rng):
        d_in = featureset(rng.normal(size=(40, 3)).astype(np.float32))
        learner = fit_fewshot(d_in, None, k=2, gamma=5.0, M=8, seed=1)
        assert learner.out_bank is None
        npt.assert_array_equal(learner.lambdas, np.zeros(1))
        base = fit_detector(d_in, k=2)
        queries = rng.normal(size=(10, 3))
        npt.assert_array_equal(
            score_fewshot_batch(learner, [queries]), score_batch(base, [queries])
        )

    def test_single_out_sample_clamps_k(self, rng):
        d_in = featureset(rng.normal(size=(30, 3)))
        d_out = featureset(rng.normal(size=(1, 3)) + 6.0)
        learner = fit_fewshot(d_in, d_out, k=4, gamma=5.0, M=8, seed=1)
        assert learner.out_bank.k == 1

    def test_lambda_matches_chained_computation(self, rng):
        d_in = featureset(rng.normal(size=(50, 4)))
        d_out = featureset(rng.normal(size=(5, 4)) + 3.0)
        seed = 77
        learner = fit_fewshot(d_in, d_out, k=2, gamma=5.0, M=16, seed=seed)
        u_in = bootstrap_uncertainty(
            d_in.layers[0].astype(np.float64), 16, bootstrap_seed(seed, 0, "in")
        )
        u_out = bootstrap_uncertainty(
            d_out.layers[0].astype(np.float64), 16, bootstrap_seed(seed, 0, "out")
        )
        assert learner.lambdas[0] == compute_lambda(u_in, u_out, 5.0)

    def test_empty_in_rejected(self, rng):
        d_out = featureset(rng.normal(size=(3, 2)))
        with pytest.raises(EmptyDatasetError):
            fit_fewshot(None, d_out, k=1, gamma=1.0, M=4, seed=0)

    def test_cached_u_in_is_used(self, rng):
        d_in = featureset(rng.normal(size=(30, 2)))
        d_out = featureset(rng.normal(size=(4, 2)) + 5.0)
        forced = np.array([0.0])
        learner = fit_fewshot(d_in, d_out, k=2, gamma=5.0, M=8, seed=3, u_in=forced)
        assert learner.lambdas[0] == 0.0

    def test_global_lambda_shared_across_layers(self, rng):
        d_in = featureset(rng.normal(size=(40, 3)), rng.normal(size=(40, 2)))
        d_out = featureset(
            rng.normal(size=(6, 3)) + 4.0, rng.normal(size=(6, 2)) + 4.0
        )
        learner = fit_fewshot(
            d_in, d_out, k=2, gamma=5.0, M=8, seed=3, global_lambda=True
        )
        assert learner.lambdas[0] == learner.lambdas[1]


class TestScoreFewshot:
    def test_zero_lambdas_equal_in_score(self, rng):
        d_in = featureset(rng.normal(size=(25, 3)))
        learner = fit_fewshot(d_in, None, k=2, gamma=1.0, M=4, seed=0)
        x = rng.normal(size=3)
        bank = fit_detector(d_in, k=2)
        assert score_fewshot(learner, [x]) == score_batch(bank, [x[None, :]])[0]

    def test_out_match_with_unit_lambda(self, rng):
        d_in = featureset(rng.normal(size=(25, 3)))
        out_point = np.array([[5.0, 5.0, 5.0]], dtype=np.float32)
        learner = fit_fewshot(
            featureset(d_in.layers[0]), featureset(out_point), k=1,
            gamma=1.0, M=4, seed=0, fixed_lambda=1.0,
        )
        x = out_point[0].astype(np.float64)
        in_only = score_batch(learner.in_bank, [x[None, :]])[0]
        assert score_fewshot(learner, [x]) == pytest.approx(in_only, abs=1e-12)

    def test_compositional_replay(self, rng):
        layer_a = rng.normal(size=(40, 3)).astype(np.float32)
        layer_b = (rng.normal(size=(40, 2)) * 2.0).astype(np.float32)
        out_a = (rng.normal(size=(6, 3)) + 3.0).astype(np.float32)
        out_b = (rng.normal(size=(6, 2)) - 3.0).astype(np.float32)
        learner = fit_fewshot(
            featureset(layer_a, layer_b),
            featureset(out_a, out_b),
            k=2, gamma=5.0, M=8, seed=11,
        )
        in_bank = fit_detector(featureset(layer_a, layer_b), k=2)
        out_bank = fit_detector(featureset(out_a, out_b), k=2)
        for _ in range(5):
            x = [rng.normal(size=3), rng.normal(size=2)]
            expected = sum(
                float(
                    score_batch(
                        fit_detector(featureset([layer_a, layer_b][li]), k=2),
                        [x[li][None, :]],
                    )[0]
                )
                - learner.lambdas[li]
                * float(
                    score_batch(
                        fit_detector(featureset([out_a, out_b][li]), k=2),
                        [x[li][None, :]],
                    )[0]
                )
                for li in range(2)
            )
            assert score_fewshot(learner, x) == pytest.approx(expected, abs=1e-9)

    def test_batch_matches_single(self, rng):
        d_in = featureset(rng.normal(size=(30, 3)))
        d_out = featureset(rng.normal(size=(5, 3)) + 4.0)
        learner = fit_fewshot(d_in, d_out, k=2, gamma=5.0, M=8, seed=2)
        queries = rng.normal(size=(7, 3))
        batch = score_fewshot_batch(learner, [queries])
        for i in range(7):
            assert batch[i] == score_fewshot(learner, [queries[i]])


class TestProperties:
    def test_determinism_bit_identical(self, rng):
        d_in = featureset(rng.normal(size=(40, 3)))
        d_out = featureset(rng.normal(size=(6, 3)) + 4.0)
        a = fit_fewshot(d_in, d_out, k=2, gamma=5.0, M=16, seed=5)
        b = fit_fewshot(d_in, d_out, k=2, gamma=5.0, M=16, seed=5)
        npt.assert_array_equal(a.lambdas, b.lambdas)
        queries = rng.normal(size=(10, 3))
        npt.assert_array_equal(
            score_fewshot_batch(a, [queries]), score_fewshot_batch(b, [queries])
        )

    def test_lambda_monotone_in_gamma(self, rng):
        d_in = featureset(rng.normal(size=(60, 3)))
        d_out = featureset(rng.normal(size=(5, 3)) + 3.0)
        lams = []
        for gamma in (0.5, 2.0, 5.0, 20.0):
            learner = fit_fewshot(d_in, d_out, k=2, gamma=gamma, M=16, seed=4)
            lams.append(learner.lambdas.copy())
        for a, b in zip(lams, lams[1:]):
            assert np.all(a <= b)

    def test_five_shot_beats_base_on_frozen_instance(self):
        # Pre-verified frozen instance: shots genuinely help.
        train, id_pool, ood_pool = fewshot_aniso(seed=3)
        shots = ood_pool.subset(np.arange(5))
        test_ood = ood_pool.subset(np.arange(5, ood_pool.n))
        learner = fit_fewshot(train, shots, k=2, gamma=5.0, M=16, seed=3)
        base = fit_detector(train, k=2)
        auc_fs = auc(
            score_fewshot_batch(learner, id_pool),
            score_fewshot_batch(learner, test_ood),
        )
        auc_base = auc(score_batch(base, id_pool), score_batch(base, test_ood))
        assert auc_fs >= auc_base

    def test_mahaad_unit_lambda_is_mdiff(self, rng):
        in_arr = rng.normal(size=(60, 3)).astype(np.float32)
        out_arr = (rng.normal(size=(8, 3)) + 3.0).astype(np.float32)
        learner = fit_fewshot(
            featureset(in_arr), featureset(out_arr),
            k=2, gamma=5.0, M=8, seed=1, variant=MAHAAD, fixed_lambda=1.0,
        )

        def mdiff_oracle(x):
            total = 0.0
            for arr, sign in ((in_arr, 1.0), (out_arr, -1.0)):
                data = arr.astype(np.float64)
                fit = fit_gaussian(data)
                shrunk = shrink(fit.cov, ledoit_wolf_nu(data))
                inv = np.linalg.inv(shrunk.matrix)
                diff = x - fit.mean
                total += sign * np.sqrt(diff @ inv @ diff)
            return total

        for _ in range(5):
            x = rng.normal(size=3)
            assert score_fewshot(learner, [x]) == pytest.approx(
                mdiff_oracle(x), abs=1e-9
            )
