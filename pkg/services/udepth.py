"""
U-depth detector: column depth histogram ("top-down view"), line grouping, and
row continuity search, lifted to world-frame boxes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from core_utils import get_logger
from models.registry import registry
from services.geometry import complete_hidden_extent


logger = get_logger(__name__)

AABB3D = registry.AABB3D
UDepthDefaults = registry.enums.UDepthDefaults

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class UDepthMap:
    width: int
    num_bins: int
    counts: np.ndarray  # (num_bins, width)
    bin_size: float
    origin: float  # metric depth of the lower edge of bin 0

    def bin_edges(self, b_min: int, b_max: int) -> tuple[float, float]:
        return self.origin + b_min * self.bin_size, self.origin + (b_max + 1) * self.bin_size


@dataclass(frozen=True)
class UDepthRegion:
    """Column range and bin range of one grouped line, with its metric depth interval."""

    u_min: int
    u_max: int
    b_min: int
    b_max: int
    near: float
    far: float

    @property
    def width(self) -> int:
        return self.u_max - self.u_min + 1

    @property
    def thickness_bins(self) -> int:
        return self.b_max - self.b_min + 1


@dataclass(frozen=True)
class UDepth2DBox:
    u_min: int
    u_max: int
    b_min: int
    b_max: int
    v_min: int
    v_max: int


def _metric(depth, intr, max_range: Optional[float] = None) -> np.ndarray:
    meters = depth.to_meters(intr.depth_scale, intr.depth_min, intr.depth_max)
    if max_range is not None:
        meters = np.where(meters > max_range, 0.0, meters)
    return meters


def _histogram(meters: np.ndarray, intr, bin_size: float) -> UDepthMap:
    width = meters.shape[1]
    num_bins = max(1, int(math.ceil((intr.depth_max - intr.depth_min) / bin_size)))
    bins = np.clip(np.floor((meters - intr.depth_min) / bin_size).astype(np.int64), 0, num_bins - 1)
    # invalid pixels land in an overflow row that is dropped below
    bins[meters <= 0] = num_bins
    flat = np.bincount((bins * width + np.arange(width)).ravel(), minlength=(num_bins + 1) * width)
    counts = flat[: num_bins * width].reshape(num_bins, width)
    return UDepthMap(width, num_bins, counts, bin_size, intr.depth_min)


def compute_u_depth(depth, intr, bin_size: float, max_range: Optional[float] = None) -> UDepthMap:
    """counts[b][u] = valid pixels of column u whose depth falls in bin b; bins span [depth_min, depth_max]."""
    if bin_size <= 0:
        raise ValueError("bin_size must be > 0")
    if depth.width != intr.width or depth.height != intr.height:
        raise ValueError("depth image size does not match intrinsics")
    return _histogram(_metric(depth, intr, max_range), intr, bin_size)


def group_lines(umap: UDepthMap, count_threshold: int, min_width: int) -> list[UDepthRegion]:
    """Connected cells with counts >= count_threshold, at least min_width columns wide.

    Runs in adjacent bins merge when their columns overlap or touch diagonally, so an oblique
    surface stepping one bin per column stays one region.
    """
    if count_threshold < 1 or min_width < 1:
        raise ValueError("thresholds must be >= 1")
    labels, _ = ndimage.label(umap.counts >= count_threshold, structure=_EIGHT_CONNECTED)
    regions = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        b_sl, u_sl = sl
        if u_sl.stop - u_sl.start < min_width:
            continue
        near, far = umap.bin_edges(b_sl.start, b_sl.stop - 1)
        regions.append(UDepthRegion(u_sl.start, u_sl.stop - 1, b_sl.start, b_sl.stop - 1, near, far))
    regions.sort(key=lambda r: (r.u_min, r.b_min))
    return regions


def _region_mask(meters: np.ndarray, region: UDepthRegion, tolerance: float) -> np.ndarray:
    cols = meters[:, region.u_min : region.u_max + 1]
    return (cols > 0) & (cols >= region.near - tolerance) & (cols <= region.far + tolerance)


def continuity_search(
    depth,
    intr,
    region: UDepthRegion,
    bin_size: float = UDepthDefaults.BIN_SIZE,
    min_pixels_per_row: int = UDepthDefaults.MIN_PIXELS_PER_ROW,
    row_fill_ratio: float = UDepthDefaults.ROW_FILL_RATIO,
    max_range: Optional[float] = None,
) -> Optional[tuple[int, int]]:
    """Longest contiguous row run whose matching-pixel count reaches the per-row minimum."""
    mask = _region_mask(_metric(depth, intr, max_range), region, bin_size)
    return _longest_run(mask, min_pixels_per_row, row_fill_ratio, region.width)


def _longest_run(mask: np.ndarray, min_pixels_per_row: int, row_fill_ratio: float, width: int):
    need = max(min_pixels_per_row, int(math.ceil(row_fill_ratio * width)))
    ok = mask.sum(axis=1) >= need
    if not np.any(ok):
        return None
    labels, n = ndimage.label(ok)
    sizes = np.bincount(labels)[1:]
    best = int(np.argmax(sizes)) + 1
    rows = np.nonzero(labels == best)[0]
    return int(rows[0]), int(rows[-1])


def _find_boxes(meters: np.ndarray, intr, cfg) -> tuple[list[UDepth2DBox], UDepthMap]:
    threshold = cfg.count_threshold or registry.utils.default_count_threshold(intr.height)
    umap = _histogram(meters, intr, cfg.bin_size)
    boxes = []
    for region in group_lines(umap, threshold, cfg.min_width):
        mask = _region_mask(meters, region, cfg.bin_size)
        rows = _longest_run(mask, cfg.min_pixels_per_row, cfg.row_fill_ratio, region.width)
        if rows is not None:
            boxes.append(UDepth2DBox(region.u_min, region.u_max, region.b_min, region.b_max, rows[0], rows[1]))
    return boxes, umap


def find_boxes2d(depth, intr, cfg) -> tuple[list[UDepth2DBox], UDepthMap]:
    """Histogram, line grouping and continuity search; one UDepth2DBox per surviving region."""
    if cfg.bin_size <= 0:
        raise ValueError("bin_size must be > 0")
    if depth.width != intr.width or depth.height != intr.height:
        raise ValueError("depth image size does not match intrinsics")
    return _find_boxes(_metric(depth, intr, cfg.max_range), intr, cfg)


def lift_box2d(meters: np.ndarray, box2d: UDepth2DBox, umap: UDepthMap, intr, pose, cfg):
    """World AABB of a 2D box: lateral extent at the near depth, depth extent from matched pixels."""
    near_edge, far_edge = umap.bin_edges(box2d.b_min, box2d.b_max)
    region = UDepthRegion(box2d.u_min, box2d.u_max, box2d.b_min, box2d.b_max, near_edge, far_edge)
    v0, v1 = box2d.v_min, box2d.v_max
    mask = _region_mask(meters[v0 : v1 + 1], region, cfg.bin_size)
    d = meters[v0 : v1 + 1, region.u_min : region.u_max + 1][mask]
    if d.size == 0:
        return None
    near, far = np.percentile(d, list(cfg.depth_percentiles))
    x0 = (region.u_min - 0.5 - intr.cx) * near / intr.fx
    x1 = (region.u_max + 0.5 - intr.cx) * near / intr.fx
    y0 = (v0 - 0.5 - intr.cy) * near / intr.fy
    y1 = (v1 + 0.5 - intr.cy) * near / intr.fy
    corners = np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (near, far)])
    box = AABB3D.from_points(pose.transform(corners))
    if cfg.complete_hidden_depth:
        box = complete_hidden_extent(box, pose, cfg.max_hidden_depth)
    return box


def detect_udepth(depth, intr, pose, cfg=None) -> list:
    cfg = cfg or registry.schemas.UDepthConfig()
    if depth.width != intr.width or depth.height != intr.height:
        raise ValueError("depth image size does not match intrinsics")
    meters = _metric(depth, intr, cfg.max_range)
    boxes2d, umap = _find_boxes(meters, intr, cfg)
    boxes = [b for b in (lift_box2d(meters, b2, umap, intr, pose, cfg) for b2 in boxes2d) if b is not None]
    logger.debug(f"udepth: {len(boxes)} boxes")
    return boxes
