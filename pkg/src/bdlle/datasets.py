"""Synthetic benchmark clouds with ground-truth distance to the boundary.

Randomness comes from Philox generators keyed by ``(seed, stream name)``,
so parameter draws, noise and auxiliary draws never share a stream and a
bundle is reproduced bit-for-bit from its seed.

Where no closed form exists, distance to the boundary is measured along a
proximity graph built over the samples, a dense auxiliary sample of the
same surface and a dense sample of the boundary curve; a multi-source
shortest-path pass from the boundary nodes gives every sample its value.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .pointcloud import PointCloud

DATASETS = ("disk", "ball", "vcut", "tcut", "klein", "noisy-disk")
DEFAULT_N = {"disk": 4000, "ball": 8000, "vcut": 5056, "tcut": 8000, "klein": 9689,
             "noisy-disk": 7897}

TORUS_R, TORUS_r = 3.0, 1.2
VCUT_GAP = 0.5
TCUT_ANGLE = 3 * math.pi / 4
TCUT_LEVEL = 2.8
KLEIN_AMBIENT = 500
NOISY_AMBIENT = 500
NOISY_PAIRS = 22


class GraphDisconnected(RuntimeError):
    pass


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent Philox stream for ``name`` under the top-level ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class DatasetBundle:
    cloud: PointCloud
    name: str
    d: int
    dist_to_boundary: np.ndarray
    params: dict = field(default_factory=dict)
    clean_cloud: PointCloud | None = None
    seed: int | None = None
    geometry: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.cloud.n


def subset_bundle(bundle: DatasetBundle, idx) -> DatasetBundle:
    """Bundle restricted to the samples ``idx`` (ground truth carried along)."""
    idx = np.asarray(idx, dtype=np.intp)
    params = {k: (v[idx] if isinstance(v, np.ndarray) and v.shape[:1] == (bundle.n,) else v)
              for k, v in bundle.params.items()}
    clean = PointCloud(bundle.clean_cloud.points[idx]) if bundle.clean_cloud is not None else None
    return DatasetBundle(PointCloud(bundle.cloud.points[idx]), bundle.name, bundle.d,
                         bundle.dist_to_boundary[idx], params, clean, bundle.seed, bundle.geometry,
                         dict(bundle.meta, subset=int(idx.size)))


def _check_n(n):
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    return int(n)


# ------------------------------------------------------------------- geometry
class _Geometry:
    """Parametric surface with a boundary curve, used by the graph oracle."""

    d = 2

    def draw(self, rng, m):  # pragma: no cover - interface
        raise NotImplementedError

    def embed(self, params):  # pragma: no cover - interface
        raise NotImplementedError

    def boundary(self, m):  # pragma: no cover - interface
        raise NotImplementedError


class DiskGeometry(_Geometry):
    def draw(self, rng, m):
        r = np.sqrt(rng.random(m))
        t = rng.uniform(0, 2 * math.pi, m)
        return {"r": r, "theta": t}

    def embed(self, params):
        return np.column_stack([params["r"] * np.cos(params["theta"]),
                                params["r"] * np.sin(params["theta"])])

    def boundary(self, m):
        t = np.linspace(0, 2 * math.pi, m, endpoint=False)
        return np.column_stack([np.cos(t), np.sin(t)])

    def closed_form(self, points):
        return np.maximum(1 - np.linalg.norm(points[:, :2], axis=1), 0.0)


class BallGeometry(_Geometry):
    d = 3

    def draw(self, rng, m):
        g = rng.standard_normal((m, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return {"dir": g, "rho": rng.random(m) ** (1 / 3)}

    def embed(self, params):
        return params["dir"] * params["rho"][:, None]

    def boundary(self, m):
        # Fibonacci sphere
        i = np.arange(m) + 0.5
        z = 1 - 2 * i / m
        t = math.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z * z)
        return np.column_stack([s * np.cos(t), s * np.sin(t), z])

    def closed_form(self, points):
        return np.maximum(1 - np.linalg.norm(points, axis=1), 0.0)


def torus_embed(theta, phi):
    ring = TORUS_R + TORUS_r * np.cos(theta)
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi), TORUS_r * np.sin(theta)])


class VCutGeometry(_Geometry):
    def draw(self, rng, m):
        theta = rng.uniform(-math.pi, math.pi, m)
        # phi uniform on [-pi, pi) minus (-gap, gap): map a uniform draw onto the two arcs
        span = math.pi - VCUT_GAP
        u = rng.uniform(0, 2 * span, m)
        phi = np.where(u < span, -math.pi + u, VCUT_GAP + (u - span))
        return {"theta": theta, "phi": phi}

    def embed(self, params):
        return torus_embed(params["theta"], params["phi"])

    def boundary(self, m):
        t = np.linspace(-math.pi, math.pi, m // 2, endpoint=False)
        return np.vstack([torus_embed(t, np.full_like(t, VCUT_GAP)),
                          torus_embed(t, np.full_like(t, -VCUT_GAP))])


def tcut_rotate(xyz):
    c, s = math.cos(TCUT_ANGLE), math.sin(TCUT_ANGLE)
    u, v, w = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    return np.column_stack([c * u - s * w, v, s * u + c * w])


class TCutGeometry(_Geometry):
    def draw(self, rng, m):
        return {"theta": rng.uniform(-math.pi, math.pi, m), "phi": rng.uniform(-math.pi, math.pi, m)}

    def embed(self, params):
        return tcut_rotate(torus_embed(params["theta"], params["phi"]))

    def keep(self, points):
        return points[:, 2] < TCUT_LEVEL

    def boundary(self, m):
        """Curve where the rotated torus meets the plane ``w' = TCUT_LEVEL``.

        Traced once as phi(theta) and once as theta(phi) so the sampling stays
        dense near the turning points of either description.
        """
        level = TCUT_LEVEL / math.sin(TCUT_ANGLE)
        half = m // 4 + 1
        th = np.linspace(-math.pi, math.pi, half, endpoint=False)
        cphi = (level + TORUS_r * np.sin(th)) / (TORUS_R + TORUS_r * np.cos(th))
        ok = np.abs(cphi) <= 1
        a = np.arccos(cphi[ok])
        part1 = [(th[ok], a), (th[ok], -a)]
        ph = np.linspace(-math.pi, math.pi, half, endpoint=False)
        cp = np.cos(ph)
        amp = TORUS_r * np.sqrt(cp * cp + 1)
        delta = np.arctan2(1.0, cp)
        arg = (level - TORUS_R * cp) / amp
        ok = np.abs(arg) <= 1
        b = np.arccos(arg[ok])
        part2 = [(-delta[ok] + b, ph[ok]), (-delta[ok] - b, ph[ok])]
        pts = [tcut_rotate(torus_embed(t, p)) for t, p in part1 + part2]
        return np.vstack(pts)


def klein_embed(theta, phi):
    ring = 1 + 0.5 * np.cos(theta)
    return np.column_stack([ring * np.cos(phi), ring * np.sin(phi),
                            0.5 * np.sin(theta) * np.cos(phi / 2),
                            0.5 * np.sin(theta) * np.sin(phi / 2)])


def klein_area_weight(theta):
    """Surface area element of the Klein parametrization, up to the factor 1/2."""
    return np.sqrt((1 + 0.5 * np.cos(theta)) ** 2 + np.sin(theta) ** 2 / 16)


class KleinGeometry(_Geometry):
    def __init__(self, surface_uniform=True):
        self.surface_uniform = surface_uniform

    def draw(self, rng, m):
        out_t, out_p, have = [], [], 0
        while have < m:
            batch = max(2 * (m - have), 64)
            t = rng.uniform(0, 2 * math.pi, batch)
            p = rng.uniform(0, 2 * math.pi, batch)
            ok = (t - math.pi) ** 2 + (p - math.pi) ** 2 >= 1
            if self.surface_uniform:
                ok &= rng.random(batch) * 1.5 <= klein_area_weight(t)
            out_t.append(t[ok])
            out_p.append(p[ok])
            have += int(ok.sum())
        return {"theta": np.concatenate(out_t)[:m], "phi": np.concatenate(out_p)[:m]}

    def embed(self, params):
        return klein_embed(params["theta"], params["phi"])

    def boundary(self, m):
        s = np.linspace(0, 2 * math.pi, m, endpoint=False)
        return klein_embed(math.pi + np.cos(s), math.pi + np.sin(s))


class NoisyDiskGeometry(_Geometry):
    """Curved disk ``(u, v, 0.2 sin(2 pi (u^2+v^2)), a_j u^2 + b_j v^2, ...)``."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def draw(self, rng, m):
        r = np.sqrt(rng.random(m))
        t = rng.uniform(0, 2 * math.pi, m)
        return {"u": r * np.cos(t), "v": r * np.sin(t)}

    def embed(self, params):
        u, v = params["u"], params["v"]
        bend = 0.2 * np.sin(2 * math.pi * (u * u + v * v))
        quad = np.outer(u * u, self.a) + np.outer(v * v, self.b)
        return np.column_stack([u, v, bend, quad])

    def boundary(self, m):
        t = np.linspace(0, 2 * math.pi, m, endpoint=False)
        return self.embed({"u": np.cos(t), "v": np.sin(t)})


# ------------------------------------------------------------- graph geodesic
def graph_distance_to_boundary(points, boundary, aux=None, neighbors=10, attempts=3):
    """Shortest-path distance from each row of ``points`` to the boundary nodes.

    The graph joins every pair of nodes closer than a radius taken as the
    largest ``neighbors``-th nearest-neighbor distance among all nodes.  A
    sample left unreachable triggers a retry with a 1.5x radius.
    """
    parts = [points] + ([aux] if aux is not None and len(aux) else []) + [boundary]
    nodes = np.vstack(parts)
    n_pts, n_bdy = len(points), len(boundary)
    tree = cKDTree(nodes)
    kk = min(neighbors + 1, len(nodes))
    radius = float(np.max(tree.query(nodes, k=kk)[0][:, -1]))
    for _ in range(attempts):
        pairs = tree.query_pairs(radius, output_type="ndarray")
        w = np.linalg.norm(nodes[pairs[:, 0]] - nodes[pairs[:, 1]], axis=1)
        graph = coo_matrix((w, (pairs[:, 0], pairs[:, 1])), shape=(len(nodes),) * 2).tocsr()
        sources = np.arange(len(nodes) - n_bdy, len(nodes))
        dist = dijkstra(graph, directed=False, indices=sources, min_only=True)[:n_pts]
        if np.all(np.isfinite(dist)):
            return dist
        radius *= 1.5
    raise GraphDisconnected(f"proximity graph still disconnected after {attempts} attempts")


GT_AUX = 40000
GT_BOUNDARY = 4000


def ground_truth_distance(bundle: DatasetBundle, aux=GT_AUX, boundary_nodes=GT_BOUNDARY,
                          use_closed_form=True, seed=None):
    """Distance to the boundary for every sample of ``bundle``.

    Closed forms are used for the disk and the ball unless
    ``use_closed_form`` is false; other shapes go through the graph oracle.
    """
    geo = bundle.geometry
    if geo is None:
        raise ValueError("bundle carries no parametric boundary description")
    clean = bundle.clean_cloud.points if bundle.clean_cloud is not None else bundle.cloud.points
    if use_closed_form and hasattr(geo, "closed_form"):
        return geo.closed_form(clean)
    width = geo.embed(geo.draw(stream(0, "probe"), 1)).shape[1]
    rng = stream(bundle.seed if seed is None else seed, "geodesic")
    aux_pts = geo.embed(geo.draw(rng, aux)) if aux else None
    if aux_pts is not None and hasattr(geo, "keep"):
        aux_pts = aux_pts[geo.keep(aux_pts)]
    # path stretch of a random proximity graph grows with dimension; denser links offset it
    neighbors = 10 * 2 ** max(geo.d - 2, 0)
    return graph_distance_to_boundary(clean[:, :width], geo.boundary(boundary_nodes), aux_pts,
                                      neighbors=neighbors)


# ------------------------------------------------------------------- samplers
def sample_disk(n=4000, seed=0, mode="nonuniform") -> DatasetBundle:
    """Unit disk; ``nonuniform`` draws the radius uniformly, ``uniform`` is area-uniform."""
    n = _check_n(n)
    rng = stream(seed, "disk")
    if mode == "uniform":
        r = np.sqrt(rng.random(n))
    elif mode == "nonuniform":
        r = rng.random(n)
    else:
        raise ValueError("mode must be 'uniform' or 'nonuniform'")
    t = rng.uniform(0, 2 * math.pi, n)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    geo = DiskGeometry()
    return DatasetBundle(PointCloud(pts), "disk", 2, geo.closed_form(pts),
                         {"r": r, "theta": t}, seed=seed, geometry=geo, meta={"mode": mode})


def sample_ball(n=8000, seed=0) -> DatasetBundle:
    n = _check_n(n)
    rng = stream(seed, "ball")
    r = rng.random(n)
    theta = rng.uniform(0, 2 * math.pi, n)
    phi = rng.uniform(0, math.pi, n)
    s = np.sqrt(r)
    pts = np.column_stack([s * np.sin(phi) * np.cos(theta), s * np.sin(phi) * np.sin(theta),
                           s * np.cos(phi)])
    geo = BallGeometry()
    return DatasetBundle(PointCloud(pts), "ball", 3, geo.closed_form(pts),
                         {"r": r, "theta": theta, "phi": phi}, seed=seed, geometry=geo)


def _graph_bundle(name, geo, params, pts, seed, **kw):
    bundle = DatasetBundle(PointCloud(pts), name, geo.d, np.zeros(len(pts)), params,
                           seed=seed, geometry=geo, **kw)
    bundle.dist_to_boundary = ground_truth_distance(bundle)
    return bundle


def sample_vcut_torus(n=5056, seed=0) -> DatasetBundle:
    n = _check_n(n)
    geo = VCutGeometry()
    params = geo.draw(stream(seed, "vcut"), n)
    return _graph_bundle("vcut", geo, params, geo.embed(params), seed)


def sample_tcut_torus(n_raw=8000, seed=0) -> DatasetBundle:
    n_raw = _check_n(n_raw)
    geo = TCutGeometry()
    params = geo.draw(stream(seed, "tcut"), n_raw)
    pts = geo.embed(params)
    keep = geo.keep(pts)
    params = {k: v[keep] for k, v in params.items()}
    return _graph_bundle("tcut", geo, params, pts[keep], seed, meta={"n_raw": n_raw})


def sample_klein(n=9689, seed=0, surface_uniform=True) -> DatasetBundle:
    n = _check_n(n)
    geo = KleinGeometry(surface_uniform)
    params = geo.draw(stream(seed, "klein"), n)
    w = geo.embed(params)
    pts = np.zeros((n, KLEIN_AMBIENT))
    pts[:, :4] = w
    return _graph_bundle("klein", geo, params, pts, seed)


def sample_noisy_disk(n=7897, seed=0, sigma=0.05) -> DatasetBundle:
    n = _check_n(n)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    coef = stream(seed, "noisy-disk/coefficients")
    a = coef.normal(0, 0.1, NOISY_PAIRS)
    b = coef.normal(0, 0.05, NOISY_PAIRS)
    geo = NoisyDiskGeometry(a, b)
    params = geo.draw(stream(seed, "noisy-disk/params"), n)
    clean = np.zeros((n, NOISY_AMBIENT))
    f = geo.embed(params)
    clean[:, : f.shape[1]] = f
    noise = stream(seed, "noisy-disk/noise").normal(0, 1, (n, NOISY_AMBIENT))
    noisy = clean + sigma * noise
    proxy = np.maximum(1 - np.hypot(params["u"], params["v"]), 0.0)
    bundle = DatasetBundle(PointCloud(noisy), "noisy-disk", 2, np.zeros(n), params,
                           clean_cloud=PointCloud(clean), seed=seed, geometry=geo,
                           meta={"sigma": sigma, "a": a, "b": b})
    bundle.params["dist_param"] = proxy
    bundle.dist_to_boundary = ground_truth_distance(bundle)
    return bundle


def sample(name, n=None, seed=0, **kw) -> DatasetBundle:
    """Dispatch by dataset name; ``n`` is the raw draw count for ``tcut``."""
    n = DEFAULT_N[name] if n is None else n
    if name == "disk":
        return sample_disk(n, seed, **kw)
    if name == "ball":
        return sample_ball(n, seed)
    if name == "vcut":
        return sample_vcut_torus(n, seed)
    if name == "tcut":
        return sample_tcut_torus(n, seed)
    if name == "klein":
        return sample_klein(n, seed, **kw)
    if name == "noisy-disk":
        return sample_noisy_disk(n, seed, **kw)
    raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")
