"""Named synthetic benchmarks: seeded generators for trains, pools and tests.

Each preset returns ``(train, id_pool, ood_pool)`` as unlabeled
FeatureSets. Deployment streams and test splits are carved out of the
pools by the experiment runner, so ground truth never leaves the runner.
"""

import numpy as np

from .datastreams import FeatureSet, GaussianComponent, synth_gaussians
from .errors import ConfigError


def _eye(d, scale=1.0):
    return np.eye(d) * scale


def _vec(d, **at):
    v = np.zeros(d)
    for idx, val in at.items():
        v[int(idx[1:])] = val
    return v


def separated_8d(seed: int, n_train=800, n_id_pool=1300, n_ood_pool=400):
    """Bimodal ID mixture vs. a one-sided OOD mixture in 8 dimensions.

    The ID modes sit at +/-3.0 along axis 0, so a single fitted Gaussian
    blurs them together and distance-to-mean scoring underperforms
    neighbor scoring. The OOD mixture lives off axis 1 on one side only,
    leaving it in reach of a linear strong learner.
    """
    d = 8
    rng_seed = np.random.SeedSequence((seed, 811)).generate_state(3)

    def id_components(total):
        half = total // 2
        return [
            GaussianComponent(half, (_vec(d, x0=3.0),), (_eye(d),)),
            GaussianComponent(total - half, (_vec(d, x0=-3.0),), (_eye(d),)),
        ]

    train = synth_gaussians(id_components(n_train), seed=int(rng_seed[0]))
    id_pool = synth_gaussians(id_components(n_id_pool), seed=int(rng_seed[1]))
    half_ood = n_ood_pool // 2
    ood_pool = synth_gaussians(
        [
            GaussianComponent(half_ood, (_vec(d, x1=3.0),), (_eye(d),)),
            GaussianComponent(
                n_ood_pool - half_ood, (_vec(d, x0=1.5, x1=4.0),), (_eye(d),)
            ),
        ],
        seed=int(rng_seed[2]),
    )
    return train, id_pool, ood_pool


def two_layer(seed: int, n_train=2000, n_id_pool=1000, n_ood_pool=400):
    """Two feature layers of width 16 and 32; OOD shifted in both layers."""
    dims = (16, 32)
    rng_seed = np.random.SeedSequence((seed, 1632)).generate_state(3)
    id_means = tuple(np.zeros(d) for d in dims)
    id_covs = tuple(_eye(d) for d in dims)
    ood_means = tuple(_vec(d, x0=2.0, x1=-2.0) for d in dims)
    ood_covs = tuple(_eye(d, 1.5) for d in dims)
    train = synth_gaussians(
        [GaussianComponent(n_train, id_means, id_covs)], seed=int(rng_seed[0])
    )
    id_pool = synth_gaussians(
        [GaussianComponent(n_id_pool, id_means, id_covs)], seed=int(rng_seed[1])
    )
    ood_pool = synth_gaussians(
        [GaussianComponent(n_ood_pool, ood_means, ood_covs)], seed=int(rng_seed[2])
    )
    return train, id_pool, ood_pool


def fewshot_aniso(seed: int, n_train=500, n_id_pool=600, n_ood_pool=400):
    """Strongly anisotropic ID with a faint sub-mode; OOD in quiet axes.

    Euclidean distances are dominated by the loud axes, so plain-metric
    scoring struggles; the OOD cluster is wider than what a handful of
    samples can pin down, so overtrusting those samples also hurts.
    """
    d = 8
    id_sd = np.array([10.0, 7.0, 5.0, 3.0, 2.0, 1.0, 1.0, 1.0])
    rng_seed = np.random.SeedSequence((seed, 85)).generate_state(3)

    def id_components(total):
        half = total // 2
        return [
            GaussianComponent(half, (_vec(d, x7=2.0),), (np.diag(id_sd**2),)),
            GaussianComponent(total - half, (_vec(d, x7=-2.0),), (np.diag(id_sd**2),)),
        ]

    train = synth_gaussians(id_components(n_train), seed=int(rng_seed[0]))
    id_pool = synth_gaussians(id_components(n_id_pool), seed=int(rng_seed[1]))
    ood_mean = _vec(d, x5=2.5, x6=2.5)
    ood_cov = np.diag(np.array([10.0, 7.0, 5.0, 3.0, 2.0, 2.0, 2.0, 2.0]) ** 2)
    ood_pool = synth_gaussians(
        [GaussianComponent(n_ood_pool, (ood_mean,), (ood_cov,))],
        seed=int(rng_seed[2]),
    )
    return train, id_pool, ood_pool


def scaled_axis(seed: int, n_train=400, n_id_pool=400, n_ood_pool=400):
    """One axis blown up 100x; OOD offset along an untouched axis.

    Plain Euclidean neighbors are dominated by the loud axis, while the
    learned metric rescales it away.
    """
    d = 4
    scale = np.ones(d)
    scale[0] = 100.0
    rng_seed = np.random.SeedSequence((seed, 104)).generate_state(3)
    id_cov = np.diag(scale**2)
    train = synth_gaussians(
        [GaussianComponent(n_train, (np.zeros(d),), (id_cov,))], seed=int(rng_seed[0])
    )
    id_pool = synth_gaussians(
        [GaussianComponent(n_id_pool, (np.zeros(d),), (id_cov,))], seed=int(rng_seed[1])
    )
    ood_pool = synth_gaussians(
        [GaussianComponent(n_ood_pool, (_vec(d, x2=3.0),), (id_cov,))],
        seed=int(rng_seed[2]),
    )
    return train, id_pool, ood_pool


def heavy_tail_train(seed: int, n_train=2000, n_id_pool=1000, n_ood_pool=300):
    """Training set with a wide 5% shell; deployment ID stays in the core.

    The score threshold lands on the shell, so core deployment samples
    sit far below it and clean streams stay cleanly pseudo-labeled ID.
    """
    d = 8
    rng_seed = np.random.SeedSequence((seed, 955)).generate_state(3)
    n_shell = max(1, n_train // 10)
    train = synth_gaussians(
        [
            GaussianComponent(n_train - n_shell, (np.zeros(d),), (_eye(d),)),
            GaussianComponent(n_shell, (np.zeros(d),), (_eye(d, 25.0),)),
        ],
        seed=int(rng_seed[0]),
    )
    id_pool = synth_gaussians(
        [GaussianComponent(n_id_pool, (np.zeros(d),), (_eye(d),))],
        seed=int(rng_seed[1]),
    )
    ood_pool = synth_gaussians(
        [GaussianComponent(n_ood_pool, (_vec(d, x0=30.0),), (_eye(d),))],
        seed=int(rng_seed[2]),
    )
    return train, id_pool, ood_pool


def identical(seed: int, n_train=400, n_id_pool=500, n_ood_pool=500):
    """ID and OOD pools drawn from the same distribution; chance-level AUC."""
    d = 4
    rng_seed = np.random.SeedSequence((seed, 55)).generate_state(3)
    spec = (np.zeros(d),), (_eye(d),)
    train = synth_gaussians([GaussianComponent(n_train, *spec)], seed=int(rng_seed[0]))
    id_pool = synth_gaussians([GaussianComponent(n_id_pool, *spec)], seed=int(rng_seed[1]))
    ood_pool = synth_gaussians([GaussianComponent(n_ood_pool, *spec)], seed=int(rng_seed[2]))
    return train, id_pool, ood_pool


PRESETS = {
    "separated-8d": separated_8d,
    "two-layer": two_layer,
    "fewshot-aniso": fewshot_aniso,
    "scaled-axis": scaled_axis,
    "heavy-tail": heavy_tail_train,
    "identical": identical,
}


def make_preset(name: str, seed: int, **overrides):
    """Instantiate a named preset; unknown names raise a config error."""
    if name not in PRESETS:
        raise ConfigError(
            f"unknown synth preset {name!r}; choose from {sorted(PRESETS)}"
        )
    return PRESETS[name](seed, **overrides)
