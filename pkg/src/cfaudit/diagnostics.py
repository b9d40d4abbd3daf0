"""Audit criteria for counterfactual explanations.

proximity     -- LOF-style ratio with k=1 against correctly classified data
connectedness -- membership of the explanation in a DBSCAN(eps, 2) cluster
                 that also holds ground-truth instances
stability     -- worst-case ratio of explanation shift to input shift
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset, Metric, distances_to, pairwise_distances
from .neighbors import NOISE, DbscanParams, NeighborIndex, dbscan

EPS_MARGIN = 1e-9


class DiagnosticError(ValueError):
    pass


def _points(data) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    return X[:, None] if X.ndim == 1 else X


@dataclass(frozen=True)
class ProximityScore:
    value: float
    a0_index: int
    numerator: float
    denominator: float


def proximity(e, same_class_data, metric: Metric | str = Metric.L2) -> ProximityScore:
    """Distance from ``e`` to its nearest instance ``a0``, relative to the
    distance from ``a0`` to the nearest instance distinct from it.

    Exact duplicates of ``a0`` are skipped in the denominator, otherwise a
    repeated training point would make the score infinite.
    """
    X = _points(same_class_data)
    idx = NeighborIndex(X, metric)
    if len(idx) < 2:
        raise DiagnosticError("proximity needs at least two same-class instances")
    a0, num = idx.nearest(e)
    d = idx.distances(X[a0])
    d = np.where(d > 0, d, np.inf)
    if not np.isfinite(d).any():
        raise DiagnosticError("proximity needs at least two distinct same-class instances")
    den = float(d.min())
    return ProximityScore(num / den, a0, num, den)


def default_epsilon(same_class_data, metric: Metric | str = Metric.L2) -> float:
    """Smallest eps leaving no instance isolated under strict ``< eps``
    neighbourhoods: the largest nearest-neighbour distance plus a margin."""
    X = _points(same_class_data)
    if len(X) < 2:
        raise DiagnosticError("default_epsilon needs at least two instances")
    D = pairwise_distances(metric, X, X)
    np.fill_diagonal(D, np.inf)
    return float(D.min(axis=1).max()) + EPS_MARGIN


@dataclass(frozen=True)
class EpsilonPolicy:
    """``mode`` is ``"auto"`` (per class, via default_epsilon) or ``"fixed"``."""

    mode: str = "auto"
    value: float | None = None

    def __post_init__(self):
        if self.mode not in ("auto", "fixed"):
            raise ValueError(f"unknown epsilon mode {self.mode!r}")
        if self.mode == "fixed" and not (self.value is not None and self.value > 0):
            raise ValueError("fixed epsilon must be positive")

    def resolve(self, same_class_data, metric=Metric.L2) -> float:
        if self.mode == "fixed":
            return float(self.value)
        return default_epsilon(same_class_data, metric)


@dataclass(frozen=True)
class ConnectednessResult:
    connected: bool
    eps: float
    cluster_id: int  # NOISE when e is isolated
    anchor_index: int | None


def connectedness(e, same_class_data, eps: float,
                  metric: Metric | str = Metric.L2) -> ConnectednessResult:
    X = _points(same_class_data)
    if len(X) == 0:
        raise DiagnosticError("connectedness needs at least one same-class instance")
    pts = np.vstack([np.asarray(e, dtype=float)[None, :], X])
    labels = dbscan(pts, DbscanParams(eps, 2), metric).labels
    cid = int(labels[0])
    if cid == NOISE:
        return ConnectednessResult(False, eps, NOISE, None)
    members = np.flatnonzero(labels[1:] == cid)
    if len(members) == 0:
        return ConnectednessResult(False, eps, cid, None)
    return ConnectednessResult(True, eps, cid, int(members[0]))


@dataclass(frozen=True)
class StabilityScore:
    value: float
    witness_index: int
    n_neighbors: int
    n_failed: int = 0


def stability(x, data, explainer: Callable, eps: float,
              x_explanation=None) -> StabilityScore:
    """Largest ``||E(x) - E(x_j)|| / ||x - x_j||`` over data points with
    ``0 < ||x - x_j|| < eps`` (L2).

    ``explainer`` maps ``(index, point)`` to an explanation vector, where the
    index is the row of ``data`` (or None for ``x`` itself), and raises on
    failure. Failed neighbours are skipped and counted.
    """
    X = _points(data)
    x = np.asarray(x, dtype=float)
    d = distances_to(Metric.L2, X, x)
    ball = np.flatnonzero((d > 0) & (d < eps))
    if len(ball) == 0:
        raise DiagnosticError("stability undefined: no data point within eps of x")
    ex = np.asarray(explainer(None, x) if x_explanation is None else x_explanation, dtype=float)
    best, witness, failed = -np.inf, -1, 0
    for j in ball:
        try:
            ej = np.asarray(explainer(int(j), X[j]), dtype=float)
        except Exception:
            failed += 1
            continue
        ratio = float(np.linalg.norm(ex - ej) / np.linalg.norm(x - X[j]))
        if ratio > best:
            best, witness = ratio, int(j)
    if witness < 0:
        raise DiagnosticError("stability undefined: the explainer failed on every neighbour")
    return StabilityScore(best, witness, len(ball), failed)
