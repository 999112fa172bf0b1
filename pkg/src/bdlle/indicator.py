"""Boundary indicator built from regularized barycentric coordinates.

For a point ``z_k`` with neighbors ``z_{k,1..N}`` let ``G`` be the p x N
matrix of differences ``z_{k,j} - z_k``.  The regularized barycentric
coordinates solve ``(G^T G + c I) y = 1``; the indicator is

    B_k = (N - c * 1^T y) / N  =  1^T G^T I_c(G G^T) G 1 / N,

where ``I_c`` is the regularized pseudo-inverse of the local covariance
matrix.  ``B_k`` approaches a fixed positive constant at the boundary of
the sampled manifold and vanishes in the interior, so thresholding it at a
fraction of its maximum picks out a thin collar of the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr

from ._parallel import map_points, map_points_array
from .pointcloud import (
    EmptyNeighborhood,
    NeighborIndex,
    NeighborParams,
    as_cloud,
    build_index,
    neighbor_sets,
)

# eigenvalues below RANK_RTOL * largest eigenvalue count as zero
RANK_RTOL = 1e-12
DEFAULT_S = 0.01


class DegenerateNormalization(ValueError):
    """The barycentric weights cannot be normalized because ``sum(y) == 0``."""


@dataclass
class LocalSpectrum:
    eigenvalues: np.ndarray
    rank: int
    eigenvectors: np.ndarray | None = None


@dataclass(frozen=True)
class Regularizer:
    value: float
    provenance: str = "explicit"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError("regularizer must be non-negative")

    def __float__(self):
        return float(self.value)


@dataclass
class BarycentricSolution:
    y: np.ndarray
    w: np.ndarray


@dataclass
class BoundaryReport:
    boundary_indices: np.ndarray
    threshold: float
    values: np.ndarray
    params: NeighborParams
    c: Regularizer
    threshold_frac: float = 0.5
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return int(self.values.size)

    def to_dict(self):
        return {
            "n": self.n,
            "params": self.params.to_dict(),
            "c": float(self.c.value),
            "c_provenance": self.c.provenance,
            "threshold_frac": self.threshold_frac,
            "threshold": float(self.threshold),
            "B": [float(v) for v in self.values],
            "boundary_indices": [int(i) for i in self.boundary_indices],
        }


def _rank(eigenvalues):
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return 0
    return int(np.count_nonzero(eigenvalues > RANK_RTOL * eigenvalues[0]))


# --------------------------------------------------------------- local algebra
def local_data_matrix(points, nbrs):
    """p x N matrix whose j-th column is ``z_{k,j} - z_k``."""
    if nbrs.count == 0:
        raise EmptyNeighborhood(nbrs.center)
    pts = points.points if hasattr(points, "points") else np.asarray(points, dtype=float)
    return (pts[nbrs.indices] - pts[nbrs.center]).T


def local_covariance_spectrum(G, vectors=True) -> LocalSpectrum:
    """Eigen-decomposition of ``C = G G^T`` from the SVD of ``G``.

    The p x p product is never formed.  Eigenvalues come back in descending
    order, padded with zeros up to length p.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    p = G.shape[0]
    if vectors:
        U, s, _ = np.linalg.svd(G, full_matrices=True)
    else:
        s = np.linalg.svd(G, compute_uv=False)
        U = None
    lam = np.zeros(p)
    lam[: s.size] = s * s
    return LocalSpectrum(eigenvalues=lam, rank=_rank(lam), eigenvectors=U)


def regularized_pseudo_inverse(spec: LocalSpectrum, c: float):
    """``U I_{p,r} (Lambda + c I)^{-1} U^T`` for the spectrum of ``C``."""
    if spec.eigenvectors is None:
        raise ValueError("regularized pseudo-inverse needs eigenvectors")
    if not c > 0:
        raise ValueError("regularizer must be positive")
    U = spec.eigenvectors[:, : spec.rank]
    filt = 1.0 / (spec.eigenvalues[: spec.rank] + c)
    return (U * filt) @ U.T


def _solve_gram(G, c):
    A = G.T @ G
    A[np.diag_indices_from(A)] += c
    return cho_solve(cho_factor(A, lower=True, check_finite=False), np.ones(A.shape[0]))


def boundary_indicator_at(G, c):
    """Indicator value for one local data matrix.

    With ``G = U S V^T`` the solution of ``(G^T G + c I) y = 1`` gives
    ``(N - c 1^T y) / N = sum_i s_i^2 (v_i . 1)^2 / (s_i^2 + c) / N``.  The
    sum is taken from singular values of ``G`` rather than a factorization of
    ``G^T G``, which would square the condition number.  A tall ``G`` is
    first reduced to its square triangular factor, which has the same
    singular values and right singular vectors.
    """
    if not c > 0:
        raise ValueError("regularizer must be positive")
    G = np.atleast_2d(np.asarray(G, dtype=float))
    p, N = G.shape
    if p > N:
        G = qr(G, mode="r", check_finite=False)[0][:N]
    _, sv, Vt = np.linalg.svd(G, full_matrices=False)
    a = Vt.sum(axis=1)
    s2 = sv * sv
    return float(np.sum(s2 * a * a / (s2 + c))) / N


def boundary_indicator_pinv(G, c):
    """Same quantity through the regularized pseudo-inverse of ``G G^T``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    g1 = G.sum(axis=1)
    Ic = regularized_pseudo_inverse(local_covariance_spectrum(G), c)
    return float(g1 @ Ic @ g1) / G.shape[1]


def barycentric_weights(G, c, atol=1e-12) -> BarycentricSolution:
    if not c > 0:
        raise ValueError("regularizer must be positive")
    y = _solve_gram(np.atleast_2d(np.asarray(G, dtype=float)), c)
    total = y.sum()
    if abs(total) <= atol * np.abs(y).sum():
        raise DegenerateNormalization("regularized barycentric weights sum to zero")
    return BarycentricSolution(y=y, w=y / total)


# -------------------------------------------------------- parameter selection
def select_K(n, d):
    """``ceil(n ** (1 / (1 + d/2)))`` clamped to ``[1, n - 1]``."""
    if n <= 2:
        return 1
    K = math.ceil(n ** (1.0 / (1.0 + d / 2.0)) - 1e-9)
    return int(min(max(K, 1), n - 1))


def select_epsilon_range(cloud, d, index: NeighborIndex | None = None):
    """(median, max) of the K-distances with ``K = select_K(n, d)``."""
    cloud = as_cloud(cloud)
    if cloud.n < 2:
        raise ValueError("need at least two points")
    index = index or build_index(cloud)
    radii = index.all_k_distances(select_K(cloud.n, d))
    return float(np.median(radii)), float(np.max(radii))


def choose_epsilon(eps_range, frac=0.5):
    """Point inside ``(eps_min, eps_max)``; the midpoint by default."""
    lo, hi = eps_range
    return lo + frac * (hi - lo)


def _leading_eigenvalues(G, m):
    """Largest ``m`` eigenvalues of ``G G^T`` (descending, zero padded)."""
    small = G.T @ G if G.shape[0] > G.shape[1] else G @ G.T
    lam = np.linalg.eigvalsh(small)[::-1]
    out = np.zeros(m)
    take = min(m, lam.size)
    out[:take] = np.maximum(lam[:take], 0.0)
    return out


def local_spectra(cloud, nbrs_list, m, workers=None):
    """n x m array of the leading local covariance eigenvalues."""
    pts = as_cloud(cloud).points

    def one(k):
        nb = nbrs_list[k]
        if nb.count == 0:
            return np.zeros(m)
        return _leading_eigenvalues(local_data_matrix(pts, nb), m)

    return np.vstack(map_points(one, len(nbrs_list), workers))


def regularizer_from_spectra(spectra, n, d, p, s=DEFAULT_S, scale=None):
    """Regularizer from per-point eigenvalues ``spectra[:, :d+1]``.

    If some point has a numerically nonzero (d+1)-th eigenvalue, the
    geometric mean rule ``c = sqrt(sum lam_d * sum lam_{d+1}) / n`` is used;
    otherwise ``c = s * sum lam_d / n``.  ``s`` is kept below ``scale``
    (epsilon or (K/n)^(1/d)) when one is given.
    """
    spectra = np.asarray(spectra, dtype=float)
    lam_d = spectra[:, d - 1]
    total_d = float(lam_d.sum())
    if total_d <= 0:
        raise ValueError("every d-th local eigenvalue is zero; cloud is degenerate for this d")
    if d < p and spectra.shape[1] > d:
        lam_next = spectra[:, d]
        nonzero = lam_next > RANK_RTOL * spectra[:, 0]
        if nonzero.any():
            c = math.sqrt(total_d * float(lam_next.sum())) / n
            return Regularizer(c, "spectral-gap")
    if scale is not None and s >= scale:
        s = 0.5 * scale
    return Regularizer(s * total_d / n, "d-nonzero")


def select_regularizer(cloud, all_nbrs, d, s=DEFAULT_S, scale=None, workers=None) -> Regularizer:
    cloud = as_cloud(cloud)
    if d > cloud.p:
        raise ValueError("intrinsic dimension exceeds ambient dimension")
    spectra = local_spectra(cloud, all_nbrs, d + 1, workers)
    return regularizer_from_spectra(spectra, cloud.n, d, cloud.p, s=s, scale=scale)


def theoretical_regularizer(n, d, epsilon=None, k=None):
    """``n eps^(d+3)`` or ``n (K/n)^((d+3)/d)``, the rates used by the analysis."""
    if epsilon is not None:
        return Regularizer(n * epsilon ** (d + 3), "theoretical")
    return Regularizer(n * (k / n) ** ((d + 3) / d), "theoretical")


def scheme_scale(params: NeighborParams, n, d):
    if params.scheme == "ball":
        return params.epsilon
    return (params.k / n) ** (1.0 / d)


def estimate_intrinsic_dim(spectra):
    """Diagnostic only: position of the largest gap in the averaged spectrum."""
    spectra = np.asarray(spectra, dtype=float)
    top = spectra[:, :1]
    norm = np.divide(spectra, top, out=np.zeros_like(spectra), where=top > 0)
    mean = norm.mean(axis=0)
    if mean.size < 2:
        return 1
    ratios = mean[1:] / np.maximum(mean[:-1], 1e-300)
    return int(np.argmin(ratios)) + 1


# ------------------------------------------------------------------ detection
def indicator_values(cloud, nbrs_list, c, workers=None):
    """B_k for every point; raises EmptyNeighborhood naming the first offender."""
    pts = as_cloud(cloud).points
    c = float(c)
    for nb in nbrs_list:
        if nb.count == 0:
            raise EmptyNeighborhood(nb.center)

    def one(k):
        return boundary_indicator_at(local_data_matrix(pts, nbrs_list[k]), c)

    return map_points_array(one, len(nbrs_list), workers)


def threshold_indices(values, threshold_frac=0.5):
    threshold = threshold_frac * float(np.max(values))
    return np.flatnonzero(values >= threshold), threshold


def detect_boundary(cloud, params: NeighborParams, c, threshold_frac=0.5, index=None,
                    nbrs_list=None, workers=None) -> BoundaryReport:
    """Run the indicator over the whole cloud and threshold it.

    ``c`` is a :class:`Regularizer` or a positive number.
    """
    cloud = as_cloud(cloud)
    reg = c if isinstance(c, Regularizer) else Regularizer(float(c))
    if not reg.value > 0:
        raise ValueError("regularizer must be positive")
    if nbrs_list is None:
        nbrs_list = neighbor_sets(index or build_index(cloud), params)
    values = indicator_values(cloud, nbrs_list, reg.value, workers)
    idx, threshold = threshold_indices(values, threshold_frac)
    return BoundaryReport(idx, threshold, values, params, reg, threshold_frac)


def run_bdlle(cloud, params: NeighborParams, d, reg="auto", s=DEFAULT_S, threshold_frac=0.5,
              index=None, workers=None) -> BoundaryReport:
    """Convenience wrapper: neighbors, automatic regularizer, detection."""
    cloud = as_cloud(cloud)
    index = index or build_index(cloud)
    nbrs_list = neighbor_sets(index, params)
    if reg == "auto":
        for nb in nbrs_list:
            if nb.count == 0:
                raise EmptyNeighborhood(nb.center)
        reg = select_regularizer(cloud, nbrs_list, d, s=s,
                                 scale=scheme_scale(params, cloud.n, d), workers=workers)
    report = detect_boundary(cloud, params, reg, threshold_frac, nbrs_list=nbrs_list,
                             workers=workers)
    report.meta["d"] = d
    return report
