"""Black-box classifiers: one-vs-rest RBF SVM and k-nearest neighbors.

Every classifier exposes ``class_scores`` (rows sum to one) and ``predict``
(argmax of the scores, ties to the lowest class id). Both accept a single
vector or a (n, d) matrix.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, Metric, pairwise_distances

log = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Classifier:
    n_classes: int
    n_features: int

    def _scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _prepare(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"dimensionality mismatch: classifier expects {self.n_features}, got {X.shape[1]}"
            )
        return X, single

    def class_scores(self, x) -> np.ndarray:
        X, single = self._prepare(x)
        S = self._scores(X)
        return S[0] if single else S

    def predict(self, x):
        X, single = self._prepare(x)
        labels = np.argmax(self._scores(X), axis=1)
        return int(labels[0]) if single else labels


class FunctionClassifier(Classifier):
    """Wraps a vectorised score function ``(n, d) -> (n, k)`` as a classifier.

    Scores are normalised by softmax unless ``normalized=True`` says the
    function already returns rows summing to one.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_features: int,
                 n_classes: int, normalized: bool = False):
        self.fn = fn
        self.n_features = n_features
        self.n_classes = n_classes
        self.normalized = normalized

    def _scores(self, X):
        S = np.asarray(self.fn(X), dtype=float).reshape(len(X), self.n_classes)
        return S if self.normalized else softmax(S)


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.einsum("ij,ij->i", A, A)[:, None]
        + np.einsum("ij,ij->i", B, B)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class RbfSvmConfig:
    c: float = 1.0
    gamma: float | str = "auto-scale"
    kkt_tolerance: float = 1e-3
    max_passes: int = 200
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if isinstance(self.gamma, str):
            if self.gamma != "auto-scale":
                raise ValueError(f"gamma must be positive or 'auto-scale', got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.kkt_tolerance > 0 or self.max_passes < 1:
            raise ValueError("kkt_tolerance and max_passes must be positive")

    def resolve_gamma(self, X: np.ndarray) -> float:
        if self.gamma != "auto-scale":
            return float(self.gamma)
        var = float(np.var(X))
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class BinarySvm:
    """Soft-margin kernel machine ``sum(alpha_i y_i K(x_i, x)) + b``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    alpha: np.ndarray  # full dual vector over the training set
    y: np.ndarray
    n_iter: int
    converged: bool

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if len(self.support_vectors) == 0:
            return np.full(len(X), self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias


def smo_train(X: np.ndarray, y: np.ndarray, c: float, gamma: float, tol: float,
              max_passes: int, rng: np.random.Generator) -> BinarySvm:
    """Solve the soft-margin dual with maximal-violating-pair SMO.

    ``y`` holds +1/-1. Each iteration picks ``i`` maximising ``-y_t G_t`` over
    the up-set and ``j`` minimising it over the low-set (random among exact
    ties), then solves the two-variable subproblem analytically. Stops when
    the violation ``m - M`` drops to ``tol`` or after ``max_passes * n``
    iterations.
    """
    n = len(y)
    K = rbf_kernel(X, X, gamma)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)
    max_iter = max_passes * n
    converged = False
    it = 0
    while it < max_iter:
        score = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not up.any() or not low.any():
            converged = True
            break
        up_idx = np.flatnonzero(up)
        low_idx = np.flatnonzero(low)
        i = up_idx[np.argmax(score[up_idx])]
        low_scores = score[low_idx]
        m_low = low_scores.min()
        if score[i] - m_low <= tol:
            converged = True
            break
        ties = low_idx[low_scores == m_low]
        j = ties[0] if len(ties) == 1 else ties[rng.integers(len(ties))]

        curvature = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if curvature <= 0:
            curvature = 1e-12
        t = (score[i] - score[j]) / curvature
        # feasible step: alpha_i += y_i t, alpha_j -= y_j t, both within [0, c]
        t = min(t, c - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else c - alpha[j])
        di, dj = y[i] * t, -y[j] * t
        alpha[i] = min(max(alpha[i] + di, 0.0), c)
        alpha[j] = min(max(alpha[j] + dj, 0.0), c)
        grad += Q[:, i] * di + Q[:, j] * dj
        it += 1

    score = -y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        hi = score[up].max() if up.any() else score[low].min()
        lo = score[low].min() if low.any() else hi
        bias = float((hi + lo) / 2.0)
    sv = alpha > 0
    return BinarySvm(X[sv].copy(), (alpha * y)[sv], bias, gamma, alpha, y.astype(float),
                     it, converged)


class RbfSvm(Classifier):
    """One-vs-rest RBF SVM; scores are the softmax of per-class decision values."""

    def __init__(self, machines: Sequence[BinarySvm], n_features: int,
                 class_names: Sequence[str], config: RbfSvmConfig):
        self.machines = list(machines)
        self.n_features = n_features
        self.n_classes = len(self.machines)
        self.class_names = tuple(class_names)
        self.config = config

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines)

    def decision_function(self, x) -> np.ndarray:
        X, single = self._prepare(x)
        D = np.column_stack([m.decision_function(X) for m in self.machines])
        return D[0] if single else D

    def _scores(self, X):
        return softmax(np.column_stack([m.decision_function(X) for m in self.machines]))

    def to_json(self) -> dict:
        return {
            "kind": "rbf_svm",
            "class_names": list(self.class_names),
            "n_features": self.n_features,
            "config": {"c": self.config.c, "gamma": self.config.gamma,
                       "kkt_tolerance": self.config.kkt_tolerance,
                       "max_passes": self.config.max_passes, "seed": self.config.seed},
            "machines": [
                {
                    "support_vectors": m.support_vectors.tolist(),
                    "dual_coef": m.dual_coef.tolist(),
                    "bias": m.bias,
                    "gamma": m.gamma,
                    "n_iter": m.n_iter,
                    "converged": m.converged,
                }
                for m in self.machines
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def from_json(cls, doc: dict) -> "RbfSvm":
        if doc.get("kind") != "rbf_svm":
            raise ValueError("not an rbf_svm model document")
        d = doc["n_features"]
        machines = []
        for m in doc["machines"]:
            sv = np.asarray(m["support_vectors"], dtype=float).reshape(-1, d)
            machines.append(BinarySvm(sv, np.asarray(m["dual_coef"], dtype=float),
                                      float(m["bias"]), float(m["gamma"]),
                                      alpha=np.abs(np.asarray(m["dual_coef"], dtype=float)),
                                      y=np.sign(np.asarray(m["dual_coef"], dtype=float)),
                                      n_iter=int(m["n_iter"]), converged=bool(m["converged"])))
        return cls(machines, d, doc["class_names"], RbfSvmConfig(**doc["config"]))

    @classmethod
    def load(cls, path) -> "RbfSvm":
        return cls.from_json(json.loads(Path(path).read_text()))


def train_rbf_svm(train: Dataset, cfg: RbfSvmConfig = RbfSvmConfig()) -> RbfSvm:
    present = np.unique(train.y)
    if len(present) < 2:
        raise TrainingError("training data must contain at least two classes")
    gamma = cfg.resolve_gamma(train.X)
    machines = []
    for label in range(train.n_classes):
        y = np.where(train.y == label, 1.0, -1.0)
        rng = np.random.default_rng([cfg.seed, label])
        m = smo_train(train.X, y, cfg.c, gamma, cfg.kkt_tolerance, cfg.max_passes, rng)
        if not m.converged:
            log.warning("SMO for class %d stopped after %d iterations without meeting "
                        "the KKT tolerance", label, m.n_iter)
        machines.append(m)
    return RbfSvm(machines, train.n_features, train.class_names, cfg)


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    metric: Metric = Metric.L2

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be an odd positive integer")


class Knn(Classifier):
    """Majority vote of the k nearest training points; scores are vote fractions."""

    def __init__(self, train: Dataset, cfg: KnnConfig):
        self.X = train.X
        self.y = train.y
        self.cfg = cfg
        self.n_features = train.n_features
        self.n_classes = train.n_classes

    def neighbors(self, X: np.ndarray) -> np.ndarray:
        D = pairwise_distances(self.cfg.metric, X, self.X)
        # stable sort: equal distances keep training order
        return np.argsort(D, axis=1, kind="stable")[:, : self.cfg.k]

    def _scores(self, X):
        votes = self.y[self.neighbors(X)]
        S = np.zeros((len(X), self.n_classes))
        for c in range(self.n_classes):
            S[:, c] = (votes == c).sum(axis=1)
        return S / self.cfg.k


def train_knn(train: Dataset, cfg: KnnConfig = KnnConfig()) -> Knn:
    if cfg.k > len(train):
        raise TrainingError(f"k={cfg.k} exceeds the training set size {len(train)}")
    return Knn(train, cfg)


def accuracy(f: Classifier, d: Dataset) -> float:
    if len(d) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    return float(np.mean(f.predict(d.X) == d.y))
