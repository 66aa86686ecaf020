import numpy as np
import pytest

from pate_forge.data import ToyDatasetConfig, generate_toy_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_toy():
    return generate_toy_dataset(ToyDatasetConfig(num_classes=3, samples_per_class=60, feature_dim=8, separation=6.0, seed=5))
