import numpy as np
import pytest

from cfaudit.classifiers import Classifier, FunctionClassifier
from cfaudit.dataset import bundled_path, load_csv

IRIS_SEPAL = ["sepal_length", "sepal_width"]


def threshold_1d(t=1.0):
    """f(z) = [z >= t]; class-1 score increases with z."""
    return FunctionClassifier(lambda Z: np.column_stack([t - Z[:, 0], Z[:, 0] - t]), 1, 2)


def threshold_in_2d(t=1.0):
    return FunctionClassifier(lambda Z: np.column_stack([t - Z[:, 0], Z[:, 0] - t]), 2, 2)


def unit_disc():
    """f(z) = [||z|| < 1]: class 1 inside the unit circle."""
    def fn(Z):
        r = np.linalg.norm(Z, axis=1)
        return np.column_stack([r - 1, 1 - r])
    return FunctionClassifier(fn, 2, 2)


def constant(n_features=2, n_classes=2, label=0):
    def fn(Z):
        S = np.zeros((len(Z), n_classes))
        S[:, label] = 1.0
        return S
    return FunctionClassifier(fn, n_features, n_classes)


class Instrumented(Classifier):
    """Counts every point passed through it, independently of the generators."""

    def __init__(self, inner):
        self.inner = inner
        self.n_features = inner.n_features
        self.n_classes = inner.n_classes
        self.points = 0

    def _scores(self, X):
        self.points += len(X)
        return self.inner._scores(X)


@pytest.fixture(scope="session")
def iris():
    return load_csv(bundled_path("iris.csv"), "species", IRIS_SEPAL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
