"""Shared fixtures: small trained victims and synthetic corpora.

Everything expensive is session scoped so the full suite trains each
victim at most once.
"""

import numpy as np
import pytest

from smia.datasets import synth_digits, split_normalize
from smia.models import ConvClassifier, LinearSoftmax, MlpClassifier
from smia.training import TrainConfig, train_sgd


@pytest.fixture(scope="session")
def digits():
    """Small digit corpus split for fast unit tests."""
    full = synth_digits(600, seed=7)
    return split_normalize(full, 0.75, seed=7)


@pytest.fixture(scope="session")
def mlp_victim(digits):
    train, _ = digits
    model = MlpClassifier(seed=1)
    train_sgd(model, train.images, train.labels,
              TrainConfig(lr=0.3, steps=800, batch_size=32, seed=1))
    return model


@pytest.fixture(scope="session")
def cnn_victim(digits):
    train, _ = digits
    model = ConvClassifier(seed=2)
    train_sgd(model, train.images, train.labels,
              TrainConfig(lr=0.25, steps=300, batch_size=32, seed=2))
    return model


@pytest.fixture(scope="session")
def linear_victim():
    """Untrained linear softmax victim on 8x8 inputs, 5 classes."""
    return LinearSoftmax((1, 8, 8), 5, seed=3, scale=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
