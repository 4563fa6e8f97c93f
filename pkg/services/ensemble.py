"""
Pairwise mutual-best-IOU ensemble of detector box lists, and the detector cascade
(U-depth + DBSCAN first, then MAD-lift boxes).
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from core_utils import get_logger
from models.registry import registry
from services.geometry import iou3d, iou_matrix


logger = get_logger(__name__)

AABB3D = registry.AABB3D
Detection = registry.Detection


def find_best_iou_match(b, candidates: Sequence) -> tuple[float, Optional[object]]:
    """(best IOU, candidate); ties go to the earliest candidate. (0.0, None) when empty."""
    if not candidates:
        return 0.0, None
    scores = [iou3d(b, c) for c in candidates]
    k = int(np.argmax(scores))
    return scores[k], candidates[k]


def fuse_boxes(a, b):
    """Max dims, mean center."""
    return AABB3D((a.center + b.center) / 2.0, np.maximum(a.dims, b.dims))


def match_pairs(boxes_1: Sequence, boxes_2: Sequence, cfg=None) -> list[tuple[int, int]]:
    """Index pairs (i, j) that are each other's best IOU match with both scores above the threshold."""
    cfg = cfg or registry.schemas.EnsembleConfig()
    if not boxes_1 or not boxes_2:
        return []
    scores = iou_matrix(boxes_1, boxes_2)
    pairs = []
    for i in range(len(boxes_1)):
        j = int(np.argmax(scores[i]))
        back = int(np.argmax(scores[:, j]))
        if scores[i, j] > cfg.iou_threshold and scores[back, j] > cfg.iou_threshold and back == i:
            pairs.append((i, j))
    return pairs


def ensemble_pair(boxes_1: Sequence, boxes_2: Sequence, cfg=None) -> list:
    return [fuse_boxes(boxes_1[i], boxes_2[j]) for i, j in match_pairs(boxes_1, boxes_2, cfg)]


def ensemble_detections(
    udepth_boxes: Sequence,
    dbscan_dets: Sequence[tuple],
    cfg=None,
) -> list:
    """First cascade pass: fused boxes carry the DBSCAN cluster cloud."""
    dbscan_boxes = [box for box, _ in dbscan_dets]
    out = []
    for i, j in match_pairs(list(udepth_boxes), dbscan_boxes, cfg):
        fused = fuse_boxes(udepth_boxes[i], dbscan_boxes[j])
        out.append(Detection(fused, dbscan_dets[j][1]))
    return out


def cascade_madlift(
    primary: Sequence,
    mad_dets: Sequence[tuple],
    cfg=None,
    dynamic_classes: Sequence[str] = ("person",),
    resample: Optional[Callable] = None,
) -> list:
    """Second cascade pass with MAD-lift (box, label) results.

    Matched pairs are fused and take the MAD-lift label. Unmatched primary detections pass through
    unchanged. An unmatched MAD-lift box is appended only for a dynamic class and only where no
    first-pass detection overlaps it: inside dense range such a box is a mislocated duplicate of
    something the depth detectors already see, beyond it it is the only detection there is.
    """
    if not mad_dets:
        return list(primary)
    classes = tuple(dynamic_classes)
    mad_boxes = [box for box, _ in mad_dets]
    primary_boxes = [d.box for d in primary]
    pairs = dict(match_pairs(primary_boxes, mad_boxes, cfg))
    out = []
    for i, det in enumerate(primary):
        if i in pairs:
            box, label = mad_dets[pairs[i]]
            dynamic = registry.utils.is_dynamic_label(label, classes)
            out.append(Detection(fuse_boxes(det.box, box), det.cloud, label, dynamic))
        else:
            out.append(det)
    matched = set(pairs.values())
    overlap = iou_matrix(mad_boxes, primary_boxes) if primary_boxes else np.zeros((len(mad_boxes), 0))
    for j, (box, label) in enumerate(mad_dets):
        if j in matched or not registry.utils.is_dynamic_label(label, classes):
            continue
        if np.any(overlap[j] > 0.0):
            logger.debug(f"cascade: dropped unmatched '{label}' box overlapping a first-pass detection")
            continue
        cloud = resample(box) if resample else registry.PointCloud.empty()
        out.append(Detection(box, cloud, label, True))
    return out
