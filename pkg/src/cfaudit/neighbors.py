"""Exact nearest-neighbour queries, strict epsilon graphs and DBSCAN.

Neighbourhood membership is strict everywhere in this module: two points
are neighbours when their distance is ``< eps``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Metric, distances_to, pairwise_distances

NOISE = -1


class NeighborIndex:
    """Immutable exhaustive-scan index over a point set."""

    def __init__(self, points, metric: Metric | str = Metric.L2):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts.setflags(write=False)
        self.points = pts
        self.metric = Metric.parse(metric)

    def __len__(self) -> int:
        return len(self.points)

    def distances(self, q) -> np.ndarray:
        return distances_to(self.metric, self.points, np.atleast_1d(np.asarray(q, dtype=float)))

    def nearest(self, q, exclude: int | None = None) -> tuple[int, float]:
        """Index and distance of the closest point, lowest index on ties."""
        if len(self) == 0 or (exclude is not None and len(self) < 2):
            raise ValueError("nearest neighbour of an empty index")
        d = self.distances(q)
        if exclude is not None:
            d = d.copy()
            d[exclude] = np.inf
        i = int(np.argmin(d))
        return i, float(d[i])


def nearest_neighbor(q, idx: NeighborIndex, exclude: int | None = None) -> tuple[int, float]:
    return idx.nearest(q, exclude)


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int = 2

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be at least 1")


@dataclass(frozen=True, eq=False)
class DbscanLabeling:
    labels: np.ndarray  # cluster id per point, NOISE for noise
    n_clusters: int

    @property
    def noise(self) -> np.ndarray:
        return self.labels == NOISE


def _adjacency(points, eps: float, metric) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pairwise_distances(metric, pts, pts) < eps


def dbscan(points, params: DbscanParams, metric: Metric | str = Metric.L2) -> DbscanLabeling:
    """Density clustering with strict ``< eps`` neighbourhoods.

    A core point has at least ``min_pts`` points (itself included) in its
    neighbourhood. Clusters are grown from cores in index order, so the
    cluster containing the lowest-index core gets id 0. A border point joins
    the lowest-id cluster among its neighbouring cores.
    """
    adj = _adjacency(points, params.eps, metric)
    n = len(adj)
    core = adj.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != NOISE:
            continue
        labels[seed] = cluster
        stack = [seed]
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(adj[p] & core & (labels == NOISE)):
                labels[q] = cluster
                stack.append(q)
        cluster += 1
    for p in np.flatnonzero(~core):
        neighbour_cores = np.flatnonzero(adj[p] & core)
        if len(neighbour_cores):
            labels[p] = labels[neighbour_cores].min()
    return DbscanLabeling(labels, cluster)


def epsilon_components(points, eps: float, metric: Metric | str = Metric.L2) -> np.ndarray:
    """Connected components of the strict eps-graph via union-find.

    Component ids are contiguous and ordered by each component's lowest index.
    """
    adj = _adjacency(points, eps, metric)
    n = len(adj)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(np.triu(adj, k=1))):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = [find(i) for i in range(n)]
    ids: dict[int, int] = {}
    return np.array([ids.setdefault(r, len(ids)) for r in roots], dtype=int)


@dataclass(frozen=True, eq=False)
class EpsilonChain:
    points: np.ndarray
    eps: float

    def is_valid(self, metric: Metric | str = Metric.L2) -> bool:
        pts = np.asarray(self.points, dtype=float)
        if len(pts) < 2:
            return True
        steps = [distances_to(metric, pts[i : i + 1], pts[i + 1])[0] for i in range(len(pts) - 1)]
        return bool(np.all(np.asarray(steps) < self.eps))


def epsilon_chain(points, start: int, end: int, eps: float,
                  metric: Metric | str = Metric.L2) -> EpsilonChain | None:
    """Shortest-hop chain from ``start`` to ``end`` through ``points``, or None."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    adj = _adjacency(pts, eps, metric)
    prev = {start: None}
    frontier = [start]
    while frontier and end not in prev:
        nxt = []
        for p in frontier:
            for q in np.flatnonzero(adj[p]):
                q = int(q)
                if q not in prev:
                    prev[q] = p
                    nxt.append(q)
        frontier = nxt
    if end not in prev:
        return None
    path = [end]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return EpsilonChain(pts[path[::-1]], eps)
