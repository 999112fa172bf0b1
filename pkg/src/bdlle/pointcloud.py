"""Point clouds and exact neighbor search (epsilon-ball and KNN schemes).

Neighbor sets follow the usual conventions for LLE-type methods:

* epsilon-ball: every point j != k with ``0 < |z_j - z_k| <= eps``;
* KNN: every point j != k with ``0 < |z_j - z_k| <= R_k`` where ``R_k`` is
  the K-distance of ``z_k``.  Points tied at ``R_k`` are all kept, so a
  neighborhood can be larger than K.

Copies of the query point (distance exactly 0) never count as neighbors.
All distances are recomputed with :func:`point_distances` before any
comparison, so indexed queries agree bit-for-bit with a brute-force scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

# above this ambient dimension tree pruning stops paying off
TREE_MAX_DIM = 16
# relative slack used when pre-filtering candidates with a non-canonical distance
_SLACK = 1e-9


class EmptyNeighborhood(ValueError):
    """Raised when a point has no neighbor under the requested scheme."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"point {index} has an empty neighborhood")


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"point cloud must be a non-empty n x p array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite values")
        object.__setattr__(self, "points", np.ascontiguousarray(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


def as_cloud(data) -> PointCloud:
    return data if isinstance(data, PointCloud) else PointCloud(data)


@dataclass(frozen=True)
class NeighborParams:
    """Either ``scheme="ball"`` with ``epsilon`` or ``scheme="knn"`` with ``k``."""

    scheme: str
    epsilon: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.scheme == "ball":
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("ball scheme needs epsilon > 0")
        elif self.scheme == "knn":
            if self.k is None or int(self.k) < 1:
                raise ValueError("knn scheme needs k >= 1")
        else:
            raise ValueError(f"unknown neighbor scheme {self.scheme!r}")

    @classmethod
    def ball(cls, epsilon):
        return cls("ball", epsilon=float(epsilon))

    @classmethod
    def knn(cls, k):
        return cls("knn", k=int(k))

    def to_dict(self):
        if self.scheme == "ball":
            return {"scheme": "ball", "epsilon": self.epsilon}
        return {"scheme": "knn", "k": self.k}


@dataclass(frozen=True)
class NeighborSet:
    center: int
    indices: np.ndarray
    distances: np.ndarray

    @property
    def count(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.count


def point_distances(points, center, idx=None):
    """Canonical Euclidean distances from ``points[center]`` to ``points[idx]``.

    Every distance comparison in the package goes through this function.
    """
    rows = points if idx is None else points[idx]
    diff = rows - points[center]
    return np.sqrt((diff * diff).sum(axis=1))


def _make_set(center, idx, dist):
    order = np.lexsort((idx, dist))
    return NeighborSet(int(center), idx[order].astype(np.intp), dist[order])


class NeighborIndex:
    """Immutable spatial index over a point cloud.

    Uses a k-d tree in low ambient dimension and a chunked brute-force scan
    otherwise.  Queries are read-only and safe to share between threads.
    """

    def __init__(self, cloud, brute=None):
        self.cloud = as_cloud(cloud)
        self.points = self.cloud.points
        self.brute = self.p > TREE_MAX_DIM if brute is None else bool(brute)
        self._tree = None if self.brute else cKDTree(self.points)
        self._sqnorms = np.einsum("ij,ij->i", self.points, self.points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def _check(self, k):
        if not 0 <= k < self.n:
            raise IndexError(f"point index {k} out of range for n={self.n}")

    # ------------------------------------------------------------------ single
    def _ball_candidates(self, k, radius):
        if self.brute:
            return np.arange(self.n)
        r = radius * (1 + _SLACK) + 1e-300
        return np.asarray(self._tree.query_ball_point(self.points[k], r), dtype=np.intp)

    def k_distance(self, k, K):
        self._check(k)
        K = int(K)
        if not 1 <= K <= self.n - 1:
            raise ValueError(f"K must lie in [1, n-1] = [1, {self.n - 1}], got {K}")
        if self.brute:
            dist = point_distances(self.points, k)
            dist = np.delete(dist, k)
        else:
            approx, _ = self._tree.query(self.points[k], k=K + 1)
            cand = self._ball_candidates(k, float(np.max(approx)))
            cand = cand[cand != k]
            dist = point_distances(self.points, k, cand)
        return float(np.partition(dist, K - 1)[K - 1])

    def radius(self, k, epsilon, strict=True):
        self._check(k)
        cand = self._ball_candidates(k, epsilon)
        cand = cand[cand != k]
        dist = point_distances(self.points, k, cand)
        keep = (dist > 0) & (dist <= epsilon)
        if strict and not keep.any():
            raise EmptyNeighborhood(k, f"no neighbor of point {k} within epsilon={epsilon}")
        return _make_set(k, cand[keep], dist[keep])

    def knn(self, k, K):
        rk = self.k_distance(k, K)
        cand = self._ball_candidates(k, rk)
        cand = cand[cand != k]
        dist = point_distances(self.points, k, cand)
        keep = (dist > 0) & (dist <= rk)
        return _make_set(k, cand[keep], dist[keep])

    # ------------------------------------------------------------------- batch
    def _brute_candidates(self, rows, thresholds):
        """Indices j with approximately |z_i - z_j| <= threshold_i for each row i."""
        gram = self.points[rows] @ self.points.T
        sq = self._sqnorms[rows, None] + self._sqnorms[None, :]
        d2 = sq - 2.0 * gram
        tol = 1e-9 * sq + 1e-300
        hits = d2 <= (thresholds[:, None] ** 2) * (1 + _SLACK) ** 2 + tol
        return [np.flatnonzero(h) for h in hits]

    def _brute_kdist_approx(self, rows, K):
        gram = self.points[rows] @ self.points.T
        d2 = self._sqnorms[rows, None] + self._sqnorms[None, :] - 2.0 * gram
        d2[np.arange(len(rows)), rows] = np.inf
        kth = np.partition(d2, K - 1, axis=1)[:, K - 1]
        return np.sqrt(np.maximum(kth, 0.0))

    def _chunks(self, chunk):
        for start in range(0, self.n, chunk):
            yield np.arange(start, min(start + chunk, self.n))

    def all_radius(self, epsilon, chunk=512):
        """Epsilon-ball neighbor sets of every point (empty sets allowed)."""
        out = []
        if self.brute:
            for rows in self._chunks(chunk):
                cands = self._brute_candidates(rows, np.full(rows.size, float(epsilon)))
                for k, cand in zip(rows, cands):
                    out.append(self._finish_ball(k, cand, epsilon))
        else:
            r = epsilon * (1 + _SLACK) + 1e-300
            lists = self._tree.query_ball_point(self.points, r)
            for k, cand in enumerate(lists):
                out.append(self._finish_ball(k, np.asarray(cand, dtype=np.intp), epsilon))
        return out

    def _finish_ball(self, k, cand, epsilon):
        cand = cand[cand != k]
        dist = point_distances(self.points, k, cand)
        keep = (dist > 0) & (dist <= epsilon)
        return _make_set(k, cand[keep], dist[keep])

    def all_knn(self, K, chunk=512):
        """KNN neighbor sets of every point, ties at the K-distance included."""
        return [s for s, _ in self._all_knn_with_kdist(K, chunk)]

    def all_k_distances(self, K, chunk=512):
        return np.array([r for _, r in self._all_knn_with_kdist(K, chunk)])

    def _all_knn_with_kdist(self, K, chunk):
        K = int(K)
        if not 1 <= K <= self.n - 1:
            raise ValueError(f"K must lie in [1, n-1] = [1, {self.n - 1}], got {K}")
        out = []
        if self.brute:
            for rows in self._chunks(chunk):
                approx = self._brute_kdist_approx(rows, K)
                cands = self._brute_candidates(rows, approx)
                out.extend(self._finish_knn(k, c, K) for k, c in zip(rows, cands))
        else:
            approx, _ = self._tree.query(self.points, k=K + 1)
            radii = approx.max(axis=1) * (1 + _SLACK) + 1e-300
            lists = self._tree.query_ball_point(self.points, radii)
            for k, cand in enumerate(lists):
                out.append(self._finish_knn(k, np.asarray(cand, dtype=np.intp), K))
        return out

    def _finish_knn(self, k, cand, K):
        cand = cand[cand != k]
        dist = point_distances(self.points, k, cand)
        rk = float(np.partition(dist, K - 1)[K - 1])
        keep = (dist > 0) & (dist <= rk)
        return _make_set(k, cand[keep], dist[keep]), rk


def build_index(cloud, brute=None) -> NeighborIndex:
    return NeighborIndex(cloud, brute=brute)


def epsilon_neighbors(index: NeighborIndex, k: int, epsilon: float, strict=True) -> NeighborSet:
    """Neighbors of point ``k`` in the closed epsilon-ball, self and copies excluded.

    Raises :class:`EmptyNeighborhood` when nothing qualifies, unless
    ``strict=False`` in which case an empty set is returned.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return index.radius(k, float(epsilon), strict=strict)


def knn_neighbors(index: NeighborIndex, k: int, K: int) -> NeighborSet:
    return index.knn(k, int(K))


def k_distance(index: NeighborIndex, k: int, K: int) -> float:
    return index.k_distance(k, int(K))


def neighbor_sets(index: NeighborIndex, params: NeighborParams):
    if params.scheme == "ball":
        return index.all_radius(params.epsilon)
    return index.all_knn(params.k)


# ---------------------------------------------------------------------- CSV IO
def save_cloud(path, points, header=True):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hdr = f"n={pts.shape[0]} p={pts.shape[1]}" if header else ""
    np.savetxt(path, pts, fmt="%.17g", delimiter=",", header=hdr, comments="# ")


def load_cloud(path) -> PointCloud:
    pts = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    return PointCloud(pts)
