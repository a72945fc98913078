import numpy as np
import pytest

from continual_ood.datastreams import FeatureSet


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def featureset(*arrays, names=None, labels=None) -> FeatureSet:
    return FeatureSet.from_arrays(list(arrays), names=names, labels=labels)
