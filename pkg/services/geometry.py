"""
Pinhole camera geometry: depth triangulation, projection, and 3D box arithmetic.

Conventions: world frame is z-up; the camera optical frame is x right, y down, z forward.
Pixel u covers [u - 0.5, u + 0.5].
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from models.registry import registry


AABB3D = registry.AABB3D
PointCloud = registry.PointCloud


def _check_dims(depth, intr) -> None:
    if depth.width != intr.width or depth.height != intr.height:
        raise ValueError(
            f"depth image is {depth.width}x{depth.height} but intrinsics expect {intr.width}x{intr.height}"
        )


def pixel_rays(intr, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Camera-frame ray directions with unit z for pixel coordinates."""
    return np.stack([(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us, dtype=np.float64)], axis=-1)


def triangulate(depth, intr, pose, stride: int = 2, max_range: Optional[float] = None):
    """Back-project every stride-th valid pixel into a world-frame PointCloud."""
    _check_dims(depth, intr)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    meters = depth.to_meters(intr.depth_scale, intr.depth_min, intr.depth_max)[::stride, ::stride]
    valid = meters > 0
    if max_range is not None:
        valid &= meters <= max_range
    if not np.any(valid):
        return PointCloud.empty()
    rows, cols = np.nonzero(valid)
    d = meters[rows, cols]
    us = (cols * stride).astype(np.float64)
    vs = (rows * stride).astype(np.float64)
    cam = pixel_rays(intr, us, vs) * d[:, None]
    return PointCloud(pose.transform(cam))


def project_points(points: np.ndarray, intr, pose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection: (uv (N,2), camera depth (N,), visible mask (N,))."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pose.inverse_transform(points)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
    visible = (
        (z > 0)
        & (z >= intr.depth_min)
        & (z <= intr.depth_max)
        & (u >= -0.5)
        & (u < intr.width - 0.5)
        & (v >= -0.5)
        & (v < intr.height - 0.5)
    )
    return np.stack([u, v], axis=1), z, visible


def project_to_pixel(p: Sequence[float], intr, pose) -> Optional[tuple[float, float, float]]:
    """(u, v, depth) of a world point, or None when outside the frustum or depth range."""
    uv, z, visible = project_points(np.asarray(p, dtype=np.float64)[None, :], intr, pose)
    if not visible[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1]), float(z[0])


def iou3d(a, b) -> float:
    overlap = np.clip(np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo), 0.0, None)
    inter = float(np.prod(overlap))
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return inter / union


def iou_matrix(boxes_a: Sequence, boxes_b: Sequence) -> np.ndarray:
    """Pairwise iou3d, shape (len(a), len(b))."""
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou3d(a, b)
    return out


def complete_hidden_extent(box, pose, max_hidden_depth: float = 1.0):
    """Extend a front-surface box away from the camera along the viewing axis.

    Only the visible surface of an object is measured, so the box is raised to
    min(lateral footprint, max_hidden_depth) along the world axis most aligned with
    the optical axis. The face nearest the camera stays fixed.
    """
    axis = pose.optical_axis
    k = int(np.argmax(np.abs(axis)))
    dims = box.dims.copy()
    lateral = dims[1 - k] if k < 2 else max(dims[0], dims[1])
    target = max(dims[k], min(lateral, max_hidden_depth))
    if target <= dims[k]:
        return box
    lo, hi = box.lo.copy(), box.hi.copy()
    if axis[k] >= 0:
        hi[k] = lo[k] + target
    else:
        lo[k] = hi[k] - target
    return AABB3D.from_bounds(lo, hi)


def cloud_in_box(cloud, box, margin: float = 1e-9):
    if cloud.is_empty:
        return cloud
    return PointCloud(cloud.points[box.contains(cloud.points, margin)])
