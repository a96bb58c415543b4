"""Grid-based DBSCAN-like clustering and Doppler torso extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .frames import DOPPLER, PointFrame

_NEIGHBOURS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if di or dj]


@dataclass(frozen=True)
class ClusterConfig:
    cell_size: float = 0.25
    thre_starter: int = 5
    thre_final: int = 15
    alpha: float = 0.0
    beta_gap: float = 0.5

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.thre_starter < 1:
            raise ValueError("thre_starter must be >= 1")
        if self.thre_final < self.thre_starter:
            raise ValueError("thre_final must be >= thre_starter")
        if self.alpha != 0:
            raise ValueError("only alpha = 0 (x-y clustering) is supported")
        if self.beta_gap < 0:
            raise ValueError("beta_gap must be >= 0")


@dataclass
class Cluster:
    indices: np.ndarray
    torso: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    centroid: np.ndarray | None = None
    mean_doppler: float = float("nan")

    def __len__(self) -> int:
        return len(self.indices)


def _points(frame) -> np.ndarray:
    return frame.points if isinstance(frame, PointFrame) else np.asarray(frame, dtype=float)


def cell_index(xy: np.ndarray, cell_size: float) -> np.ndarray:
    return np.floor(np.asarray(xy)[:, :2] / cell_size).astype(np.int64)


def build_grid(frame, cfg: ClusterConfig) -> dict[tuple[int, int], list[int]]:
    """Bucket point indices by the x-y grid cell they fall into."""
    pts = _points(frame)
    grid: dict[tuple[int, int], list[int]] = {}
    if len(pts) == 0:
        return grid
    cells = cell_index(pts, cfg.cell_size)
    for k, (i, j) in enumerate(cells.tolist()):
        grid.setdefault((i, j), []).append(k)
    return grid


def _seed(grid: dict) -> tuple[int, int]:
    # most populated cell, ties to the lowest (i, j)
    return min(grid, key=lambda c: (-len(grid[c]), c))


def grid_cluster(grid: dict[tuple[int, int], list[int]], cfg: ClusterConfig) -> list[Cluster]:
    """Seed at the fullest cell, flood-fill occupied 8-neighbours, keep big clusters.

    Every absorbed cell leaves the grid whether or not its cluster survives
    the ``thre_final`` size check. The input mapping is not modified.
    """
    remaining = dict(grid)
    clusters = []
    while remaining:
        seed = _seed(remaining)
        if len(remaining[seed]) < cfg.thre_starter:
            break
        members = []
        stack = [seed]
        members.extend(remaining.pop(seed))
        while stack:
            i, j = stack.pop()
            for di, dj in _NEIGHBOURS:
                nb = (i + di, j + dj)
                cell = remaining.pop(nb, None)
                if cell is not None:
                    members.extend(cell)
                    stack.append(nb)
        if len(members) >= cfg.thre_final:
            clusters.append(Cluster(np.array(sorted(members), dtype=int)))
    return clusters


def doppler_groups(doppler: np.ndarray, gap: float) -> list[np.ndarray]:
    """Split positions into runs of sorted Doppler separated by jumps > ``gap``."""
    order = np.argsort(doppler, kind="stable")
    if len(order) == 0:
        return []
    cuts = np.nonzero(np.diff(doppler[order]) > gap)[0] + 1
    return np.split(order, cuts)


def torso_extract(cluster: Cluster, frame, cfg: ClusterConfig) -> Cluster:
    """Pick the fastest Doppler sub-group of a cluster and compute its centroid."""
    pts = _points(frame)
    idx = np.asarray(cluster.indices, dtype=int)
    if len(idx) == 0:
        raise ValueError("cannot extract a torso from an empty cluster")
    sub = pts[idx]
    best = None
    best_key = None
    for grp in doppler_groups(sub[:, DOPPLER], cfg.beta_gap):
        speed = float(np.mean(np.abs(sub[grp, DOPPLER])))
        key = (-speed, -len(grp), float(np.mean(sub[grp, 2])))
        if best_key is None or key < best_key:
            best, best_key = grp, key
    torso = np.sort(idx[best])
    tp = pts[torso]
    return Cluster(idx, torso, tp[:, :3].mean(axis=0), float(tp[:, DOPPLER].mean()))


def cluster_frame(frame, cfg: ClusterConfig | None = None) -> list[Cluster]:
    """Clusters with torso subsets and centroids for one frame."""
    cfg = cfg or ClusterConfig()
    pts = _points(frame)
    if len(pts) < cfg.thre_final:
        return []
    grid = build_grid(pts, cfg)
    return [torso_extract(c, pts, cfg) for c in grid_cluster(grid, cfg)]


def frame_centroids(frame, cfg: ClusterConfig | None = None) -> np.ndarray:
    clusters = cluster_frame(frame, cfg)
    if not clusters:
        return np.empty((0, 3))
    return np.vstack([c.centroid for c in clusters])


class GridDBSCAN(ClusterMixin, BaseEstimator):
    """Estimator wrapper around the grid clustering for ``(n, 4)`` point arrays.

    Columns are ``x, y, z, doppler`` (a fifth SNR column is ignored).

    Attributes
    ----------
    labels_ : ndarray of shape (n,)
        Cluster label per point, -1 for points left out of every cluster.
    torso_mask_ : ndarray of bool
        True for points selected as torso of their cluster.
    centroids_ : ndarray of shape (n_clusters, 3)
    """

    def __init__(self, cell_size=0.25, thre_starter=5, thre_final=15, beta_gap=0.5):
        self.cell_size = cell_size
        self.thre_starter = thre_starter
        self.thre_final = thre_final
        self.beta_gap = beta_gap

    def _config(self) -> ClusterConfig:
        return ClusterConfig(self.cell_size, self.thre_starter, self.thre_final,
                             beta_gap=self.beta_gap)

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=0)
        if X.shape[1] < 4:
            raise ValueError(f"expected at least 4 columns (x, y, z, doppler), got {X.shape[1]}")
        pts = np.zeros((len(X), 5))
        pts[:, :4] = X[:, :4]
        clusters = cluster_frame(pts, self._config())
        self.labels_ = np.full(len(X), -1, dtype=int)
        self.torso_mask_ = np.zeros(len(X), dtype=bool)
        for k, c in enumerate(clusters):
            self.labels_[c.indices] = k
            self.torso_mask_[c.torso] = True
        self.centroids_ = (np.vstack([c.centroid for c in clusters]) if clusters
                           else np.empty((0, 3)))
        self.n_clusters_ = len(clusters)
        return self

    def predict_centroids(self, X):
        return self.fit(X).centroids_

    def __sklearn_is_fitted__(self):
        return hasattr(self, "labels_")


__all__ = [
    "ClusterConfig", "Cluster", "GridDBSCAN", "build_grid", "grid_cluster",
    "torso_extract", "cluster_frame", "frame_centroids", "doppler_groups",
]
