"""
Lifts externally supplied 2D class-labeled boxes to 3D with the median-absolute-deviation depth range.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from core_utils import get_logger
from models.registry import registry


logger = get_logger(__name__)

AABB3D = registry.AABB3D


def mad(depths) -> tuple[float, float]:
    """(median, median absolute deviation)."""
    d = np.asarray(depths, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("mad requires at least one depth value")
    med = float(np.median(d))
    return med, float(np.median(np.abs(d - med)))


def mad_range(depths, median: float, mad_value: float, n: float) -> tuple[float, float]:
    """(d_min, d_max) over depths within median +- n * MAD."""
    d = np.asarray(depths, dtype=np.float64).ravel()
    inside = d[(d >= median - n * mad_value) & (d <= median + n * mad_value)]
    if inside.size == 0:
        return median, median
    return float(inside.min()), float(inside.max())


def box_depths(det, meters: np.ndarray, pixel_step: int = 1) -> np.ndarray:
    """Valid metric depths inside a 2D box, sampled every pixel_step pixels."""
    h, w = meters.shape
    clipped = det.clipped(w, h)
    if clipped is None:
        return np.zeros(0)
    u0, u1 = int(math.ceil(clipped.u_min)), int(math.floor(clipped.u_max))
    v0, v1 = int(math.ceil(clipped.v_min)), int(math.floor(clipped.v_max))
    if u1 < u0 or v1 < v0:
        return np.zeros(0)
    patch = meters[v0 : v1 + 1 : pixel_step, u0 : u1 + 1 : pixel_step]
    return patch[patch > 0]


def lift_to_3d(det, depth, intr, pose, cfg=None) -> Optional[tuple]:
    """(world AABB3D, class label), or None when the box holds no valid depth."""
    cfg = cfg or registry.schemas.MadConfig()
    meters = depth.to_meters(intr.depth_scale, intr.depth_min, intr.depth_max)
    d = box_depths(det, meters, cfg.pixel_step)
    if d.size == 0:
        logger.debug(f"madlift: dropped '{det.class_label}' box with no valid depth")
        return None
    med, spread = mad(d)
    d_min, d_max = mad_range(d, med, spread, cfg.n)
    if d_max - d_min < cfg.min_thickness:
        d_max = d_min + cfg.min_thickness
    det = det.clipped(intr.width, intr.height)
    x0 = (det.u_min - intr.cx) * med / intr.fx
    x1 = (det.u_max - intr.cx) * med / intr.fx
    y0 = (det.v_min - intr.cy) * med / intr.fy
    y1 = (det.v_max - intr.cy) * med / intr.fy
    corners = np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (d_min, d_max)])
    return AABB3D.from_points(pose.transform(corners)), det.class_label


def detect_madlift(detections2d, depth, intr, pose, cfg=None) -> list[tuple]:
    cfg = cfg or registry.schemas.MadConfig()
    out = [r for r in (lift_to_3d(det, depth, intr, pose, cfg) for det in detections2d or ()) if r is not None]
    logger.debug(f"madlift: {len(out)} of {len(detections2d or ())} boxes lifted")
    return out
