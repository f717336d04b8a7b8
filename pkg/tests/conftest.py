import numpy as np
import pytest

from counterfact.model import MlpModel, TrainConfig, train
from counterfact.synth import SynthConfig, generate


def linear_model(weights, bias, **kw):
    """Single softmax layer; ``weights`` is (n_features, n_classes)."""
    return MlpModel(((np.asarray(weights, float), np.asarray(bias, float)),), **kw)


def random_model(rng, sizes, activation="tanh", scale=1.0):
    layers = tuple(
        (rng.normal(0, scale / np.sqrt(a), (a, b)), rng.normal(0, 0.1, b))
        for a, b in zip(sizes[:-1], sizes[1:])
    )
    return MlpModel(layers, hidden_activation=activation)


@pytest.fixture(scope="session")
def synth_model():
    """A small model on the four-cluster data, good enough for unit tests."""
    X, y = generate(SynthConfig(n_points=1200, seed=3))
    return train(TrainConfig(hidden_layer_sizes=(32, 32), epochs=40, seed=0), X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
