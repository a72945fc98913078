import numpy as np
import numpy.testing as npt
import pytest

from continual_ood._kernels import (
    backend_name,
    knn_mean_distance,
    knn_mean_distance_numpy,
)


def brute_force(train, queries, k):
    out = np.empty(len(queries))
    for i, q in enumerate(queries):
        dists = sorted(np.linalg.norm(q - row) for row in train)
        out[i] = sum(dists[:k]) / k
    return out


def test_backend_is_known():
    assert backend_name() in ("numba", "numpy")


@pytest.mark.parametrize("k", [1, 2, 5, 17])
def test_active_backend_matches_brute_force(rng, k):
    train = rng.normal(size=(17, 6))
    queries = rng.normal(size=(9, 6))
    npt.assert_allclose(
        knn_mean_distance(train, queries, k), brute_force(train, queries, k), atol=1e-9
    )


@pytest.mark.parametrize("k", [1, 3, 17])
def test_numpy_fallback_matches_brute_force(rng, k):
    train = rng.normal(size=(17, 4))
    queries = rng.normal(size=(11, 4))
    npt.assert_allclose(
        knn_mean_distance_numpy(train, queries, k),
        brute_force(train, queries, k),
        atol=1e-9,
    )


def test_backends_agree(rng):
    train = rng.normal(size=(600, 8)) * 3.0
    queries = rng.normal(size=(700, 8)) * 3.0  # spans multiple numpy chunks
    for k in (1, 2, 10):
        a = knn_mean_distance(train, queries, k)
        b = knn_mean_distance_numpy(train, queries, k)
        npt.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_batch_equals_sequential(rng):
    train = rng.normal(size=(40, 5))
    queries = rng.normal(size=(12, 5))
    batch = knn_mean_distance(train, queries, 3)
    single = np.array(
        [knn_mean_distance(train, q[None, :], 3)[0] for q in queries]
    )
    npt.assert_array_equal(batch, single)


def test_deterministic_across_calls(rng):
    train = rng.normal(size=(300, 7))
    queries = rng.normal(size=(200, 7))
    a = knn_mean_distance(train, queries, 4)
    b = knn_mean_distance(train, queries, 4)
    npt.assert_array_equal(a, b)


def test_k_out_of_range(rng):
    train = rng.normal(size=(5, 2))
    with pytest.raises(ValueError):
        knn_mean_distance(train, train, 6)
    with pytest.raises(ValueError):
        knn_mean_distance(train, train, 0)


def test_empty_queries(rng):
    train = rng.normal(size=(5, 2))
    assert knn_mean_distance(train, np.empty((0, 2)), 2).shape == (0,)
