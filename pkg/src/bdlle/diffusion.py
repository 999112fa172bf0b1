"""Diffusion maps with the density-removing (alpha = 1) normalization.

The random-walk matrix ``D^{-1} W`` is similar to the symmetric
``S = D^{-1/2} W D^{-1/2}``, so eigenpairs are taken from ``S`` and mapped
back by ``D^{-1/2}``.  The kernel diagonal is zeroed by default: in high
ambient dimension the self-affinity ``k(z, z) = 1`` dwarfs every
off-diagonal entry once noise is present, while the off-diagonal entries
keep their relative sizes.  Eigenvector columns are scaled to Euclidean norm
``sqrt(n)`` (unit mean square), and each column is signed so that its first
nonzero entry is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import cdist

from .pointcloud import PointCloud, as_cloud

SPARSE_ABOVE = 4000
KERNEL_FLOOR = 1e-14


@dataclass(frozen=True)
class DmParams:
    epsilon: float
    ell: int = 3
    n_max: int | None = None
    self_loops: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("diffusion bandwidth must be positive")
        if int(self.ell) < 1:
            raise ValueError("embedding dimension must be at least 1")

    def to_dict(self):
        return {"epsilon": self.epsilon, "ell": self.ell, "n_max": self.n_max,
                "self_loops": self.self_loops}


@dataclass
class DmEmbedding:
    coords: np.ndarray
    eigenvalues: np.ndarray
    indices: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def cloud(self) -> PointCloud:
        return PointCloud(self.coords)


def subsample_indices(n, n_max, seed=0):
    """Sorted deterministic subsample of ``range(n)`` of size ``n_max``."""
    if n_max is None or n_max >= n:
        return np.arange(n)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    return np.sort(rng.choice(n, size=int(n_max), replace=False))


def kernel_matrix(points, epsilon, self_loops=False):
    sq = cdist(points, points, "sqeuclidean")
    K = np.exp(-sq / (4.0 * epsilon * epsilon))
    # exact symmetry regardless of summation order inside cdist
    K = np.triu(K) + np.triu(K, 1).T
    if not self_loops:
        np.fill_diagonal(K, 0.0)
    return K


def normalized_affinity(points, epsilon, self_loops=False):
    """``W = K / (q q^T)`` and its row sums ``D`` for the Gaussian kernel ``K``."""
    K = kernel_matrix(points, epsilon, self_loops)
    q = K.sum(axis=1)
    if np.any(q <= 0):
        raise FloatingPointError("kernel row sum vanished")
    W = K / np.outer(q, q)
    return W, W.sum(axis=1)


def markov_matrix(points, epsilon, self_loops=False):
    W, D = normalized_affinity(points, epsilon, self_loops)
    return W / D[:, None]


def _fix_signs(V):
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 0)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def dm_eigenpairs(points, epsilon, count, sparse=None, self_loops=False):
    """``count`` smallest eigenpairs of ``(I - D^{-1} W) / epsilon^2``, ascending."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if count > n:
        raise ValueError("more eigenpairs requested than points")
    W, D = normalized_affinity(pts, epsilon, self_loops)
    s = 1.0 / np.sqrt(D)
    S = W * np.outer(s, s)
    sparse = n > SPARSE_ABOVE if sparse is None else sparse
    if sparse:
        S[S < KERNEL_FLOOR * S.max()] = 0.0
        S = csr_matrix(S)
        S = (S + S.T) * 0.5
        mu, U = eigsh(S, k=count, which="LA", v0=np.sqrt(D), tol=1e-12)
    else:
        mu, U = eigh(S, subset_by_index=[n - count, n - 1], check_finite=False)
    order = np.argsort(-mu, kind="stable")
    mu, U = mu[order], U[:, order]
    V = U * s[:, None]
    V *= np.sqrt(n) / np.linalg.norm(V, axis=0)
    return (1.0 - mu) / epsilon**2, _fix_signs(V)


def dm_embed(cloud, params: DmParams, seed=0) -> DmEmbedding:
    """Coordinates ``(V_1(i), ..., V_ell(i))``; the constant ``V_0`` is dropped."""
    cloud = as_cloud(cloud)
    idx = subsample_indices(cloud.n, params.n_max, seed)
    pts = cloud.points[idx]
    if params.ell + 1 > len(idx):
        raise ValueError("need at least ell + 1 points")
    lam, V = dm_eigenpairs(pts, params.epsilon, params.ell + 1, self_loops=params.self_loops)
    return DmEmbedding(coords=np.ascontiguousarray(V[:, 1:]), eigenvalues=lam, indices=idx,
                       eigenvectors=V)


def denoise_detect(cloud, dm: DmParams, detector, seed=0):
    """Embed with diffusion maps, run ``detector`` on the embedding, map indices back.

    ``detector`` is a callable taking a :class:`PointCloud` and returning an
    object with ``boundary_indices``.  Detected indices refer to the
    original cloud; with a subsample they are translated through it.
    """
    emb = dm_embed(cloud, dm, seed)
    report = detector(emb.cloud)
    report.boundary_indices = emb.indices[np.asarray(report.boundary_indices, dtype=np.intp)]
    if hasattr(report, "meta"):
        report.meta["dm"] = dm.to_dict()
        report.meta["dm_eigenvalues"] = [float(v) for v in emb.eigenvalues]
    return report, emb
