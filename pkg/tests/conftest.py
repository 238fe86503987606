import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mprtkit.core import RngStream
from mprtkit.nn import Conv2d, Dense, Flatten, MaxPool2d, Model, ReLU
from mprtkit.nn.zoo import _initialise
from mprtkit.toy import toy_problem

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def linear_model(W, b=None):
    W = np.asarray(W, dtype=np.float64)
    C, D = W.shape
    return Model([Dense(D, C, W, np.zeros(C) if b is None else b)], (D,), C)


def two_conv_net(seed=0, shape=(1, 8, 8), num_classes=5, bias=True):
    """2 conv + 2 dense with random parameters (untrained)."""
    c, h, w = shape
    layers = [
        Conv2d(c, 3, 3, padding=1), ReLU(), MaxPool2d(2),
        Conv2d(3, 4, 3, padding=1), ReLU(),
        Flatten(),
        Dense(4 * (h // 2) * (w // 2), 12), ReLU(),
        Dense(12, num_classes),
    ]
    layers = _initialise(layers, seed)
    if not bias:
        layers = [l.with_params(l.weight, np.zeros_like(l.bias)) if l.has_params else l for l in layers]
    return Model(layers, shape, num_classes)


def random_inputs(n, shape, seed=0, positive=False):
    x = RngStream(seed).child("inputs").generator().normal(size=(n,) + tuple(shape))
    return np.abs(x) if positive else x


@pytest.fixture(scope="session")
def toy():
    """(trained toy CNN, train split, test split) for seed 0."""
    return toy_problem(0)


@pytest.fixture(scope="session")
def toy_seeds():
    return [toy_problem(s) for s in range(5)]


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
