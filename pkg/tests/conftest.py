import numpy as np
import pytest

from tsimpact import LabeledDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_two_class_dataset(rng, n_per_class=6, d=24, bump_slice=(8, 12), bump=2.0):
    """Class B equals class A noise plus a bump confined to one slice."""
    Xa = rng.normal(0.0, 0.3, (n_per_class, d))
    Xb = rng.normal(0.0, 0.3, (n_per_class, d))
    Xb[:, bump_slice[0]:bump_slice[1]] += bump
    X = np.vstack([Xa, Xb])
    labels = ("A",) * n_per_class + ("B",) * n_per_class
    return LabeledDataset(X, labels)


@pytest.fixture
def two_class(rng):
    return make_two_class_dataset(rng)
