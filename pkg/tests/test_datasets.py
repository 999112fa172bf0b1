import math

import numpy as np
import pytest
from scipy.stats import kstest

from bdlle.datasets import (DATASETS, GraphDisconnected, TCUT_LEVEL, graph_distance_to_boundary,
                            ground_truth_distance, sample, sample_ball, sample_disk, sample_klein,
                            sample_noisy_disk, sample_tcut_torus, sample_vcut_torus, stream,
                            subset_bundle, tcut_rotate, torus_embed)


@pytest.fixture(scope="module")
def vcut():
    return sample_vcut_torus(1500, 4)


def test_streams_independent_and_reproducible():
    a = stream(7, "disk").random(5)
    assert np.array_equal(a, stream(7, "disk").random(5))
    assert not np.array_equal(a, stream(7, "ball").random(5))
    assert not np.array_equal(a, stream(8, "disk").random(5))
    with pytest.raises(ValueError):
        stream(-1, "disk")


@pytest.mark.parametrize("name", DATASETS)
def test_determinism_and_nonnegative(name):
    n = 300
    a, b = sample(name, n, 5), sample(name, n, 5)
    assert np.array_equal(a.cloud.points, b.cloud.points)
    assert np.array_equal(a.dist_to_boundary, b.dist_to_boundary)
    assert a.dist_to_boundary.shape == (a.n,)
    assert np.all(a.dist_to_boundary >= 0)
    assert not np.array_equal(sample(name, n, 6).cloud.points, a.cloud.points)


def test_unknown_dataset_and_bad_n():
    with pytest.raises(ValueError):
        sample("sphere", 10)
    with pytest.raises(ValueError):
        sample_disk(0)


def test_disk_modes():
    b = sample_disk(4000, 1, mode="uniform")
    assert np.allclose(b.dist_to_boundary, 1 - np.linalg.norm(b.cloud.points, axis=1))
    assert np.mean(b.dist_to_boundary < 0.1) == pytest.approx(0.19, abs=0.02)
    nu = sample_disk(4000, 1)
    assert kstest(np.linalg.norm(nu.cloud.points, axis=1), "uniform").pvalue > 1e-3
    with pytest.raises(ValueError):
        sample_disk(10, mode="spiral")


def test_ball_radial_law():
    b = sample_ball(8000, 2)
    s = np.linalg.norm(b.cloud.points, axis=1)
    assert np.all(s <= 1)
    assert kstest(s, lambda x: np.clip(x, 0, 1) ** 2).pvalue > 1e-3
    assert np.allclose(b.dist_to_boundary, 1 - s)


def test_vcut_construction(vcut):
    phi = vcut.params["phi"]
    assert not np.any(np.abs(phi) < 0.5)
    assert np.allclose(vcut.cloud.points, torus_embed(vcut.params["theta"], phi))
    assert graph_distance_to_boundary(torus_embed(np.array([0.3]), np.array([0.5])),
                                      torus_embed(np.array([0.3, 0.31]), np.array([0.5, 0.5])))[0] == 0


def test_vcut_path_upper_bound(vcut):
    theta, phi = vcut.params["theta"], vcut.params["phi"]
    bound = (3 + 1.2 * np.cos(theta)) * (np.abs(phi) - 0.5)
    ratio = vcut.dist_to_boundary / bound
    assert np.percentile(ratio, 99) <= 1.05
    # graph paths zigzag by at most about one edge length
    assert np.all(vcut.dist_to_boundary <= bound + 0.06)
    near = (np.abs(phi) - 0.5) < 0.3
    rel = np.abs(vcut.dist_to_boundary[near] - bound[near]) / np.maximum(bound[near], 1e-9)
    assert np.median(rel) < 0.05


def test_tcut_kept_fraction_and_rotation():
    b = sample_tcut_torus(8000, 3)
    assert np.all(b.cloud.points[:, 2] < TCUT_LEVEL)
    assert b.n / 8000 == pytest.approx(7596 / 8000, abs=0.01)
    raw = torus_embed(b.params["theta"], b.params["phi"])
    assert np.allclose(np.linalg.norm(tcut_rotate(raw), axis=1), np.linalg.norm(raw, axis=1),
                       atol=1e-12)
    assert b.meta["n_raw"] == 8000


def test_klein_construction():
    b = sample_klein(600, 1)
    t, p = b.params["theta"], b.params["phi"]
    assert np.all((t - math.pi) ** 2 + (p - math.pi) ** 2 >= 1)
    assert b.cloud.p == 500 and np.all(b.cloud.points[:, 4:] == 0)
    assert np.all(np.linalg.norm(b.cloud.points, axis=1) <= 1.5 + 0.5 * math.sqrt(2))
    flat = sample_klein(600, 1, surface_uniform=False)
    assert flat.n == 600


def test_noisy_disk():
    b = sample_noisy_disk(400, 2, sigma=0.05)
    clean = b.clean_cloud.points
    assert np.all(np.hypot(clean[:, 0], clean[:, 1]) <= 1)
    noise = b.cloud.points - clean
    assert np.mean(np.abs(noise)) == pytest.approx(0.05 * math.sqrt(2 / math.pi), rel=0.02)
    assert np.mean(np.linalg.norm(noise, axis=1)) == pytest.approx(0.05 * math.sqrt(500), rel=0.02)
    quiet = sample_noisy_disk(400, 2, sigma=0.0)
    assert np.array_equal(quiet.cloud.points, quiet.clean_cloud.points)
    assert np.array_equal(quiet.dist_to_boundary, b.dist_to_boundary)
    assert np.all(b.params["dist_param"] >= 0)
    # graph geodesic on the clean surface is at least the parameter-plane distance
    assert np.median(b.dist_to_boundary - b.params["dist_param"]) > -0.02
    with pytest.raises(ValueError):
        sample_noisy_disk(10, sigma=-1)


@pytest.mark.parametrize("maker", [lambda: sample_disk(4000, 3, mode="uniform"),
                                   lambda: sample_ball(4000, 3)])
def test_graph_matches_closed_form(maker):
    b = maker()
    graph = ground_truth_distance(b, use_closed_form=False)
    exact = b.dist_to_boundary
    inside = exact > 0.1
    assert np.median(np.abs(graph[inside] - exact[inside]) / exact[inside]) < 0.03
    assert np.max(np.abs(graph - exact)) < 0.05


def test_graph_self_consistency(vcut):
    coarse = ground_truth_distance(vcut, aux=10000, boundary_nodes=2000)
    fine = ground_truth_distance(vcut, aux=20000, boundary_nodes=4000)
    rel = np.abs(coarse - fine) / np.maximum(fine, 1e-9)
    assert np.median(rel) < 0.02


def test_graph_triangle_inequality():
    # on a flat disk the surface metric is the chord, so distances are 1-Lipschitz
    b = sample_disk(1500, 2, mode="uniform")
    dist = ground_truth_distance(b, use_closed_form=False)
    pts = b.cloud.points
    rng = np.random.default_rng(0)
    i, j = rng.integers(0, b.n, (2, 500))
    chord = np.linalg.norm(pts[i] - pts[j], axis=1)
    assert np.all(np.abs(dist[i] - dist[j]) <= chord + 0.03)


def test_graph_disconnected():
    rng = np.random.default_rng(0)
    near, far = rng.random((5, 2)), rng.random((5, 2)) + 100.0
    with pytest.raises(GraphDisconnected):
        graph_distance_to_boundary(np.vstack([near, far]), rng.random((5, 2)), neighbors=2)


def test_subset_bundle(vcut):
    sub = subset_bundle(vcut, [3, 1, 4])
    assert sub.n == 3
    assert np.array_equal(sub.cloud.points, vcut.cloud.points[[3, 1, 4]])
    assert np.array_equal(sub.params["phi"], vcut.params["phi"][[3, 1, 4]])
