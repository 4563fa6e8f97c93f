from __future__ import annotations

from collections import deque

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from factories.scene_presets import single_box
from models.registry import registry
from services.dbscan import dbscan_cluster, detect_dbscan, voxel_filter
from services.scenegen import render_frame
from services.spatial_grid import SpatialHashGrid
from tests.helpers import cloud_grid


def _reference_dbscan(points: np.ndarray, eps: float, min_pts: int) -> list[np.ndarray]:
    """Textbook O(n^2) DBSCAN with the same numbering and border rules."""
    n = len(points)
    neighbors = cdist(points, points) <= eps
    core = neighbors.sum(axis=1) >= min_pts
    labels = np.full(n, -1)
    cluster = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        labels[seed] = cluster
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in np.nonzero(neighbors[p] & core)[0]:
                if labels[q] < 0:
                    labels[q] = cluster
                    queue.append(q)
        cluster += 1
    for p in np.nonzero(~core)[0]:
        owners = labels[neighbors[p] & core]
        if owners.size:
            labels[p] = owners.min()
    return [np.nonzero(labels == c)[0] for c in range(cluster)]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dbscan_matches_reference(seed: int) -> None:
    rng = np.random.default_rng(seed)
    blobs = [rng.normal(c, 0.15, size=(40, 3)) for c in ([0, 0, 0], [2, 0, 0], [0, 2, 1])]
    points = np.vstack(blobs + [rng.uniform(-1, 3, size=(30, 3))])
    got = dbscan_cluster(registry.PointCloud(points), eps=0.3, min_pts=4)
    want = _reference_dbscan(points, eps=0.3, min_pts=4)
    assert len(got) == len(want)
    for a, b in zip(got, want):
        assert a.tolist() == b.tolist()


def test_dbscan_edge_cases() -> None:
    assert dbscan_cluster(registry.PointCloud.empty(), 0.3, 4) == []
    # isolated points are all noise
    sparse = np.array([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    assert dbscan_cluster(registry.PointCloud(sparse), 0.3, 2) == []
    # min_pts 1 makes every point its own core
    clusters = dbscan_cluster(registry.PointCloud(sparse), 0.3, 1)
    assert [c.tolist() for c in clusters] == [[0], [1], [2]]
    # exactly eps apart still counts as a neighbor
    pair = np.array([[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]])
    assert [c.tolist() for c in dbscan_cluster(registry.PointCloud(pair), 0.3, 2)] == [[0, 1]]
    with pytest.raises(ValueError):
        dbscan_cluster(registry.PointCloud(sparse), 0.0, 4)


def test_grid_nearest_matches_brute_force() -> None:
    rng = np.random.default_rng(5)
    points = rng.uniform(0, 2, size=(300, 3))
    queries = rng.uniform(-0.5, 2.5, size=(100, 3))
    d = cdist(queries, points)
    best = d.argmin(axis=1)
    # a search radius wider than the cell resolves through the full scan
    for radius in (0.25, 0.6):
        index, dist = SpatialHashGrid(points, 0.25).nearest(queries, radius)
        hit = d.min(axis=1) <= radius
        assert hit.any()
        assert np.array_equal(index[hit], best[hit])
        assert np.allclose(dist[hit], d.min(axis=1)[hit])
        assert (index[~hit] == -1).all()
        assert np.isinf(dist[~hit]).all()


def test_grid_nearest_breaks_ties_by_lower_index() -> None:
    points = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    index, dist = SpatialHashGrid(points, 0.3).nearest(np.zeros((1, 3)), radius=2.0)
    assert index.tolist() == [0]
    assert dist[0] == pytest.approx(1.0)
    near, _ = SpatialHashGrid(points, 1.5).nearest(np.zeros((1, 3)))
    assert near.tolist() == [0]
    empty, _ = SpatialHashGrid(np.zeros((0, 3)), 0.3).nearest(np.zeros((2, 3)))
    assert empty.tolist() == [-1, -1]


def test_voxel_filter_centroids_and_sparse_voxels() -> None:
    pts = np.array([[0.01, 0.01, 0.01], [0.03, 0.05, 0.07], [0.55, 0.55, 0.55]])
    out = voxel_filter(registry.PointCloud(pts), voxel_size=0.1, min_points=2)
    assert len(out) == 1
    assert np.allclose(out.points[0], [0.02, 0.03, 0.04])
    assert len(voxel_filter(registry.PointCloud(pts), 0.1, min_points=1)) == 2
    assert voxel_filter(registry.PointCloud.empty(), 0.1).is_empty
    dense = cloud_grid([0.0, 0.0, 0.0], [0.98, 0.98, 0.98], 0.02)
    assert len(voxel_filter(dense, 0.1)) == 1000


def test_detect_dbscan_single_cube(small_intr, camera_pose) -> None:
    depth, truth = render_frame(single_box(distance=2.0, size=1.0), 0.0, small_intr)
    detections = detect_dbscan(depth, small_intr, camera_pose)
    assert len(detections) == 1
    box, cloud = detections[0]
    assert box.lo[0] == pytest.approx(2.0, abs=0.01)
    assert box.center[1] == pytest.approx(0.0, abs=0.05)
    assert box.center[2] == pytest.approx(1.0, abs=0.05)
    assert 0.7 < box.dims[1] <= 1.05
    assert box.contains(cloud.points).all()


def test_detect_dbscan_respects_max_range(small_intr, camera_pose) -> None:
    depth, _ = render_frame(single_box(distance=2.0), 0.0, small_intr)
    cfg = registry.schemas.DbscanConfig(max_range=1.5)
    assert detect_dbscan(depth, small_intr, camera_pose, cfg) == []


def test_dbscan_matches_reference_on_random_clouds() -> None:
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 501))
        points = rng.uniform(0.0, float(rng.uniform(1.0, 4.0)), size=(n, 3))
        eps = float(rng.uniform(0.1, 0.5))
        min_pts = int(rng.integers(1, 8))
        got = {frozenset(c.tolist()) for c in dbscan_cluster(registry.PointCloud(points), eps, min_pts)}
        want = {frozenset(c.tolist()) for c in _reference_dbscan(points, eps, min_pts)}
        assert got == want
