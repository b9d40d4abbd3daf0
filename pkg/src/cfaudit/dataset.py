"""Labeled datasets, CSV ingestion, splitting and distance metrics."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

L0_TOLERANCE = 1e-9


class DatasetError(ValueError):
    pass


class Metric(str, enum.Enum):
    L0 = "L0"
    L1 = "L1"
    L2 = "L2"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        try:
            return cls(value if isinstance(value, cls) else str(value).upper())
        except ValueError:
            raise ValueError(f"unknown metric {value!r}; expected one of L0, L1, L2") from None


def _as_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimensionality mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return a, b


def distance(metric: Metric | str, a, b) -> float:
    """Distance between two feature vectors under ``metric``.

    L0 counts coordinates whose absolute difference exceeds ``L0_TOLERANCE``.
    """
    a, b = _as_pair(a, b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("distance expects two 1-D vectors")
    return float(pairwise_distances(metric, a[None, :], b[None, :])[0, 0])


def distances_to(metric: Metric | str, points, q) -> np.ndarray:
    """Distances from every row of ``points`` to the single vector ``q``."""
    points, q = _as_pair(points, q)
    return pairwise_distances(metric, points, q[None, :])[:, 0]


def pairwise_distances(metric: Metric | str, A, B) -> np.ndarray:
    metric = Metric.parse(metric)
    A, B = _as_pair(A, B)
    diff = np.abs(A[:, None, :] - B[None, :, :])
    if metric is Metric.L2:
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if metric is Metric.L1:
        return diff.sum(axis=2)
    return (diff > L0_TOLERANCE).sum(axis=2).astype(float)


class LabeledInstance(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix with contiguous integer labels.

    ``X`` has shape (n, d) and ``y`` holds ids into ``class_names``.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=int)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DatasetError("empty dataset")
        if y.shape != (X.shape[0],):
            raise DatasetError("labels must match the number of instances")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        if len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names does not match dimensionality")
        if y.min() < 0 or y.max() >= len(self.class_names):
            raise DatasetError("label id out of range")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[LabeledInstance]:
        for row, label in zip(self.X, self.y):
            yield LabeledInstance(row, int(label))

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "Dataset":
        """Rows at ``indices``. May be empty, unlike a constructed Dataset."""
        indices = np.asarray(indices, dtype=int)
        return _unchecked(self.X[indices], self.y[indices], self.feature_names, self.class_names)

    def select_features(self, names: Sequence[str]) -> "Dataset":
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DatasetError(f"unknown feature column(s): {', '.join(missing)}")
        cols = [self.feature_names.index(n) for n in names]
        return Dataset(self.X[:, cols], self.y, tuple(names), self.class_names)


def _unchecked(X, y, feature_names, class_names) -> Dataset:
    ds = object.__new__(Dataset)
    X = np.array(X, dtype=float).reshape(-1, len(feature_names))
    y = np.array(y, dtype=int)
    X.setflags(write=False)
    y.setflags(write=False)
    object.__setattr__(ds, "X", X)
    object.__setattr__(ds, "y", y)
    object.__setattr__(ds, "feature_names", tuple(feature_names))
    object.__setattr__(ds, "class_names", tuple(class_names))
    return ds


def bundled_path(name: str) -> Path:
    """Path of a CSV shipped in ``cfaudit/data`` (e.g. ``iris2d.csv``)."""
    return Path(str(resources.files("cfaudit") / "data" / name))


def load_csv(path, label_column: str, features: Sequence[str] | None = None) -> Dataset:
    """Read a CSV with one header row and a text label column.

    Labels get ids in order of first appearance. ``features`` restricts and
    orders the feature columns; by default every non-label column is used.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError("empty dataset") from None
        if label_column not in header:
            raise DatasetError(f"unknown label column {label_column!r}")
        label_pos = header.index(label_column)
        if features is None:
            features = [h for i, h in enumerate(header) if i != label_pos]
        missing = [f for f in features if f not in header or f == label_column]
        if missing:
            raise DatasetError(f"unknown feature column(s): {', '.join(missing)}")
        cols = [header.index(f) for f in features]

        rows, labels, class_ids = [], [], {}
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DatasetError(f"row {lineno}: expected {len(header)} cells, got {len(record)}")
            values = []
            for c in cols:
                cell = record[c].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"row {lineno}, column {header[c]!r}: non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(f"row {lineno}, column {header[c]!r}: non-finite value")
                values.append(v)
            name = record[label_pos].strip()
            labels.append(class_ids.setdefault(name, len(class_ids)))
            rows.append(values)
    if not rows:
        raise DatasetError("empty dataset")
    return Dataset(np.array(rows), np.array(labels), tuple(features), tuple(class_ids))


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: Dataset
    test: Dataset
    seed: int
    train_fraction: float
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


def train_test_split(d: Dataset, train_fraction: float, seed: int) -> DatasetSplit:
    """Shuffle-and-cut split.

    The permutation is ``numpy.random.Generator(PCG64(seed)).permutation(n)``;
    the first ``round(train_fraction * n)`` indices form the training side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(d)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DatasetError(f"train_fraction {train_fraction} leaves an empty side for n={n}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    return DatasetSplit(d.subset(train_idx), d.subset(test_idx), seed, train_fraction,
                        train_idx, test_idx)


def correctly_predicted_subset(f, d: Dataset, label: int) -> Dataset:
    """Instances of class ``label`` that ``f`` also predicts as ``label``."""
    if len(d) == 0:
        return d
    pred = f.predict(d.X)
    return d.subset(np.flatnonzero((pred == label) & (d.y == label)))


class MinMaxScaler:
    """Per-feature affine map to [0, 1], fit on training data only."""

    def fit(self, d: Dataset) -> "MinMaxScaler":
        self.min_ = d.X.min(axis=0)
        span = d.X.max(axis=0) - self.min_
        self.scale_ = np.where(span > 0, span, 1.0)
        return self

    def transform_array(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.min_) / self.scale_

    def transform(self, d: Dataset) -> Dataset:
        return _unchecked(self.transform_array(d.X), d.y, d.feature_names, d.class_names)
