"""
Point-cloud detector: voxel filter, DBSCAN over a voxel-hash grid, tight box fitting.

Recommended improvements:
- Reuse the triangulated cloud across detectors when U-depth payloads need resampling.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from core_utils import get_logger
from models.registry import registry
from services.geometry import triangulate
from services.spatial_grid import SpatialHashGrid


logger = get_logger(__name__)

AABB3D = registry.AABB3D
PointCloud = registry.PointCloud
DbscanDefaults = registry.enums.DbscanDefaults


def voxel_filter(cloud, voxel_size: float, min_points: int = DbscanDefaults.MIN_VOXEL_POINTS):
    """One centroid per occupied voxel; voxels with fewer than min_points raw points are dropped."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be > 0")
    if cloud.is_empty:
        return PointCloud.empty()
    pts = cloud.points
    cells = np.floor(pts / voxel_size).astype(np.int64)
    cells -= cells.min(axis=0)
    span = cells.max(axis=0) + 1
    keys = (cells[:, 0] * span[1] + cells[:, 1]) * span[2] + cells[:, 2]
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    sums = np.stack([np.bincount(inverse, weights=pts[:, k], minlength=len(uniq)) for k in range(3)], axis=1)
    keep = counts >= min_points
    return PointCloud(sums[keep] / counts[keep, None])


def dbscan_cluster(cloud, eps: float, min_pts: int) -> list[np.ndarray]:
    """DBSCAN labels as index arrays.

    A point's neighborhood includes itself (distance <= eps). Clusters are numbered by their
    lowest-index core point; a border point joins the lowest-numbered cluster among its core neighbors.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return []
    i, j = SpatialHashGrid(points, eps).radius_pairs(eps)
    core = np.bincount(i, minlength=n) >= min_pts
    if not np.any(core):
        return []
    cc = core[i] & core[j]
    graph = csr_matrix((np.ones(int(cc.sum()), dtype=np.int8), (i[cc], j[cc])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)

    core_idx = np.nonzero(core)[0]
    # first occurrence in index order == lowest core index of each component
    comps, first = np.unique(comp[core_idx], return_index=True)
    order = np.argsort(core_idx[first], kind="stable")
    cluster_of_comp = np.full(comp.max() + 1, -1, dtype=np.int64)
    cluster_of_comp[comps[order]] = np.arange(len(comps))

    labels = np.full(n, -1, dtype=np.int64)
    labels[core_idx] = cluster_of_comp[comp[core_idx]]
    border = ~core[i] & core[j]
    if np.any(border):
        bi, bc = i[border], labels[j[border]]
        best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(best, bi, bc)
        touched = np.unique(bi)
        labels[touched] = best[touched]

    return [np.nonzero(labels == c)[0] for c in range(len(comps))]


def detect_dbscan(depth, intr, pose, cfg=None) -> list[tuple]:
    """(tight AABB3D, voxel-level PointCloud) per cluster of at least min_cluster_size points."""
    cfg = cfg or registry.schemas.DbscanConfig()
    cloud = triangulate(depth, intr, pose, cfg.stride, cfg.max_range)
    filtered = voxel_filter(cloud, cfg.voxel_size, cfg.min_voxel_points)
    out = []
    for idx in dbscan_cluster(filtered, cfg.eps, cfg.min_pts):
        if len(idx) < cfg.min_cluster_size:
            continue
        pts = filtered.points[idx]
        out.append((AABB3D.from_points(pts), PointCloud(pts)))
    logger.debug(f"dbscan: {len(cloud)} points -> {len(filtered)} voxels -> {len(out)} clusters")
    return out
