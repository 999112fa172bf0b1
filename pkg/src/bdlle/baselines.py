"""Comparison boundary detectors: BORDER, BRIM, BAND, SPINVER, LEVER and CPS.

Each detector computes one or two per-point statistics from a neighborhood
and thresholds them at fixed percentiles of their empirical distribution.
Percentiles use the nearest-rank rule on the sorted values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_points
from .oracles import sphere_volume
from .pointcloud import NeighborIndex, as_cloud, build_index

ALGORITHMS = ("border", "brim", "band", "spinver", "lever", "cps")


@dataclass
class BaselineResult:
    name: str
    boundary_indices: np.ndarray
    scores: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "params": self.params,
            "boundary_indices": [int(i) for i in self.boundary_indices],
            "scores": {k: [float(v) for v in np.asarray(s)] for k, s in self.scores.items()},
        }


@dataclass
class CpsDistances:
    d_hat: np.ndarray
    tangent_dim: int
    epsilon: float | None = None


def nearest_rank(values, pct):
    """Value at the ``pct``-th percentile by the nearest-rank method."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(pct / 100.0 * values.size))
    return float(values[min(rank, values.size) - 1])


def _index(cloud, index):
    cloud = as_cloud(cloud)
    return cloud, index if index is not None else build_index(cloud)


def _flatten(sets):
    """CSR-style arrays (row, col, dist) from a list of neighbor sets."""
    counts = np.array([s.count for s in sets], dtype=np.intp)
    rows = np.repeat(np.arange(len(sets)), counts)
    cols = np.concatenate([s.indices for s in sets]) if counts.sum() else np.zeros(0, np.intp)
    dist = np.concatenate([s.distances for s in sets]) if counts.sum() else np.zeros(0)
    return counts, rows, cols, dist


# ---------------------------------------------------------------------- BORDER
def reverse_knn_counts(cloud, K, index: NeighborIndex | None = None):
    cloud, index = _index(cloud, index)
    _, _, cols, _ = _flatten(index.all_knn(K))
    return np.bincount(cols, minlength=cloud.n)


def border(cloud, K, pct=5.0, index=None) -> BaselineResult:
    """Points whose reverse-KNN count is below the ``pct``-th percentile."""
    counts = reverse_knn_counts(cloud, K, index)
    delta = nearest_rank(counts, pct)
    idx = np.flatnonzero(counts < delta)
    return BaselineResult("border", idx, {"reverse_count": counts}, {"k": int(K), "pct": pct})


# ------------------------------------------------------------------------ BRIM
def brim_scores(cloud, epsilon, index=None):
    cloud, index = _index(cloud, index)
    pts = cloud.points
    sets = index.all_radius(epsilon)
    sizes = np.array([s.count for s in sets])
    bd = np.zeros(cloud.n)
    for k, s in enumerate(sets):
        if s.count == 0:
            continue
        # lowest index among the neighbors with the largest count
        order = np.lexsort((s.indices, -sizes[s.indices]))
        att = s.indices[order[0]]
        diffs = pts[s.indices] - pts[k]
        cos_side = diffs @ (pts[att] - pts[k])
        n_pos = int(np.count_nonzero(cos_side >= 0))
        n_neg = s.count - n_pos
        bd[k] = n_pos / (n_neg if n_neg > 0 else 1) * abs(n_pos - n_neg)
    return bd


def brim(cloud, epsilon, pct=95.0, index=None) -> BaselineResult:
    bd = brim_scores(cloud, epsilon, index)
    idx = np.flatnonzero(bd > nearest_rank(bd, pct))
    return BaselineResult("brim", idx, {"BD": bd}, {"epsilon": float(epsilon), "pct": pct})


# ------------------------------------------------------------------------ BAND
def band_scores(cloud, K, index=None):
    cloud, index = _index(cloud, index)
    counts, rows, cols, dist = _flatten(index.all_knn(K))
    D = counts / np.bincount(rows, weights=dist, minlength=cloud.n)
    # population variance of D over the point and its neighbors
    s1 = D + np.bincount(rows, weights=D[cols], minlength=cloud.n)
    s2 = D * D + np.bincount(rows, weights=D[cols] ** 2, minlength=cloud.n)
    m = counts + 1
    VD = np.maximum(s2 / m - (s1 / m) ** 2, 0.0)
    return D, VD


def band(cloud, K, pct_low=20.0, pct_high=80.0, index=None) -> BaselineResult:
    D, VD = band_scores(cloud, K, index)
    idx = np.flatnonzero((D < nearest_rank(D, pct_low)) & (VD > nearest_rank(VD, pct_high)))
    params = {"k": int(K), "pct_low": pct_low, "pct_high": pct_high}
    return BaselineResult("band", idx, {"D": D, "VD": VD}, params)


# ------------------------------------------------------------- SPINVER / LEVER
def _asymmetry_scores(cloud, K, index):
    cloud, index = _index(cloud, index)
    pts = cloud.points
    counts, rows, cols, dist = _flatten(index.all_knn(K))
    summed = np.zeros_like(pts)
    np.add.at(summed, rows, pts[cols] - pts[rows])
    s = np.abs(summed).sum(axis=1)
    return counts, rows, dist, s


def spinver_scores(cloud, K, index=None):
    counts, rows, dist, s = _asymmetry_scores(cloud, K, index)
    f = np.exp(np.bincount(rows, weights=dist * dist, minlength=counts.size) / counts)
    return s, f


def spinver(cloud, K, pct_s=95.0, pct_f=5.0, index=None) -> BaselineResult:
    s, f = spinver_scores(cloud, K, index)
    idx = np.flatnonzero((s > nearest_rank(s, pct_s)) & (f < nearest_rank(f, pct_f)))
    return BaselineResult("spinver", idx, {"s": s, "f": f},
                          {"k": int(K), "pct_s": pct_s, "pct_f": pct_f})


def lever_scores(cloud, K, index=None):
    counts, rows, dist, s = _asymmetry_scores(cloud, K, index)
    H = s / counts
    D = np.bincount(rows, weights=np.exp(dist), minlength=counts.size)
    return H, D


def lever(cloud, K, pct_H=95.0, pct_D=5.0, index=None) -> BaselineResult:
    H, D = lever_scores(cloud, K, index)
    idx = np.flatnonzero((H > nearest_rank(H, pct_H)) & (D < nearest_rank(D, pct_D)))
    return BaselineResult("lever", idx, {"H": H, "D": D},
                          {"k": int(K), "pct_H": pct_H, "pct_D": pct_D})


# ------------------------------------------------------------------------- CPS
def cps_half_counts(cloud, epsilon, index=None):
    """Points in the closed ``epsilon/2`` ball around each point, the point itself included."""
    cloud, index = _index(cloud, index)
    return np.array([s.count for s in index.all_radius(epsilon / 2)]) + 1


def cps_directions(cloud, epsilon, d, sets=None, index=None):
    """Unit inward-direction estimates; rows are zero where the raw estimate vanishes."""
    cloud, index = _index(cloud, index)
    pts = cloud.points
    sets = sets if sets is not None else index.all_radius(epsilon)
    half = cps_half_counts(cloud, epsilon, index)
    vol = sphere_volume(d - 1) / d * (epsilon / 2) ** d
    v = np.zeros_like(pts)
    for k, s in enumerate(sets):
        if s.count:
            v[k] = vol * ((pts[s.indices] - pts[k]) / half[s.indices, None]).sum(axis=0)
    norms = np.linalg.norm(v, axis=1)
    ok = norms > 0
    v[ok] /= norms[ok, None]
    return v, ok


def cps_distances(cloud, epsilon, d, index=None, workers=None) -> CpsDistances:
    """Estimated distance to the boundary for every point.

    Points whose direction estimate vanishes (perfectly balanced
    neighborhoods) get ``+inf``, as do points without neighbors.  Points
    whose neighbors all lie on the inner side get 0.
    """
    cloud, index = _index(cloud, index)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if d > cloud.p:
        raise ValueError("intrinsic dimension exceeds ambient dimension")
    pts = cloud.points
    sets = index.all_radius(epsilon)
    vhat, ok = cps_directions(cloud, epsilon, d, sets=sets, index=index)

    def one(k):
        s = sets[k]
        if s.count == 0 or not ok[k]:
            return math.inf
        G = pts[s.indices] - pts[k]
        U = np.linalg.svd(G.T, full_matrices=False)[0][:, :d]
        proj = (G @ U) @ U.T
        vk = vhat[k] @ U @ U.T
        vi = vhat[s.indices] @ U @ U.T
        cut = (vi @ vk) > 0
        direction = vhat[k] + 0.5 * (vhat[s.indices] - vhat[k]) * cut[:, None]
        # x - y orientation: a point on the boundary sees only neighbors further inside;
        # the estimate is a distance, so it is floored at zero
        return max(float(np.max(-(proj * direction).sum(axis=1))), 0.0)

    d_hat = np.asarray(map_points(one, cloud.n, workers), dtype=float)
    return CpsDistances(d_hat=d_hat, tangent_dim=int(d), epsilon=float(epsilon))


def cps_detect(dists: CpsDistances, r) -> BaselineResult:
    idx = np.flatnonzero(dists.d_hat < r)
    return BaselineResult("cps", idx, {"d_hat": dists.d_hat},
                          {"epsilon": dists.epsilon, "d": dists.tangent_dim, "radius": float(r)})


def run_baseline(name, cloud, *, k=None, epsilon=None, d=None, radius=None, index=None,
                 workers=None):
    """Dispatch by detector name; CPS requires ``radius``."""
    if name == "border":
        return border(cloud, k, index=index)
    if name == "brim":
        return brim(cloud, epsilon, index=index)
    if name == "band":
        return band(cloud, k, index=index)
    if name == "spinver":
        return spinver(cloud, k, index=index)
    if name == "lever":
        return lever(cloud, k, index=index)
    if name == "cps":
        return cps_detect(cps_distances(cloud, epsilon, d, index=index, workers=workers), radius)
    raise ValueError(f"unknown baseline {name!r}; choose from {', '.join(ALGORITHMS)}")
