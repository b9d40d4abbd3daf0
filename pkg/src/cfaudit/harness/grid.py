"""Decision-region grids for 2-D classifiers and artifact-region search."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def grid_bounds(X, margin: float = 0.1) -> list[tuple[float, float]]:
    """Per-feature (min, max) of ``X`` widened by ``margin`` times the range."""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = margin * np.where(hi > lo, hi - lo, 1.0)
    return [(float(a), float(b)) for a, b in zip(lo - pad, hi + pad)]


def export_decision_grid(f, bounds, resolution: int) -> np.ndarray:
    """``resolution**2`` rows of ``(x1, x2, label)``.

    Row ``j * resolution + i`` holds grid node ``(x1_i, x2_j)``: x1 varies
    fastest.
    """
    if len(bounds) != 2 or f.n_features != 2:
        raise ValueError("decision grids need a 2-D feature space")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    x1 = np.linspace(bounds[0][0], bounds[0][1], resolution)
    x2 = np.linspace(bounds[1][0], bounds[1][1], resolution)
    g1, g2 = np.meshgrid(x1, x2)
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    labels = f.predict(pts)
    return np.column_stack([pts, labels])


def write_grid_csv(grid: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("x1,x2,label\n")
        for a, b, lab in grid:
            fh.write(f"{float(a)!r},{float(b)!r},{int(lab)}\n")


def read_grid_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1).reshape(-1, 3)


@dataclass(frozen=True)
class GridRegion:
    label: int
    cells: np.ndarray  # flat grid indices
    n_training: int

    @property
    def size(self) -> int:
        return len(self.cells)


def _cell_of(points, bounds, resolution) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    out = np.empty(len(pts), dtype=int)
    ij = []
    for k, (lo, hi) in enumerate(bounds):
        t = np.rint((pts[:, k] - lo) / (hi - lo) * (resolution - 1)).astype(int)
        ij.append(np.clip(t, 0, resolution - 1))
    out[:] = ij[1] * resolution + ij[0]
    return out


def label_regions(grid: np.ndarray, resolution: int) -> np.ndarray:
    """Flood fill 4-connected same-label regions; returns a region id per cell."""
    labels = grid[:, 2].astype(int).reshape(resolution, resolution)
    region = np.full(labels.shape, -1, dtype=int)
    next_id = 0
    for j in range(resolution):
        for i in range(resolution):
            if region[j, i] >= 0:
                continue
            lab = labels[j, i]
            region[j, i] = next_id
            queue = deque([(j, i)])
            while queue:
                a, b = queue.popleft()
                for na, nb in ((a - 1, b), (a + 1, b), (a, b - 1), (a, b + 1)):
                    if (0 <= na < resolution and 0 <= nb < resolution
                            and region[na, nb] < 0 and labels[na, nb] == lab):
                        region[na, nb] = next_id
                        queue.append((na, nb))
            next_id += 1
    return region.ravel()


def grid_regions(grid: np.ndarray, resolution: int, bounds, train_X) -> list[GridRegion]:
    """All same-label regions with the number of training points falling in
    them (each point is assigned to its nearest grid node)."""
    region = label_regions(grid, resolution)
    owners = region[_cell_of(train_X, bounds, resolution)]
    counts = np.bincount(owners, minlength=region.max() + 1)
    out = []
    for rid in range(region.max() + 1):
        cells = np.flatnonzero(region == rid)
        out.append(GridRegion(int(grid[cells[0], 2]), cells, int(counts[rid])))
    return out


def empty_regions(grid: np.ndarray, resolution: int, bounds, train_X) -> list[GridRegion]:
    """Regions that hold no training instance."""
    return [r for r in grid_regions(grid, resolution, bounds, train_X) if r.n_training == 0]
