from __future__ import annotations

import numpy as np
import pytest

from models.registry import registry
from services.ensemble import (
    cascade_madlift,
    ensemble_detections,
    ensemble_pair,
    find_best_iou_match,
    fuse_boxes,
    match_pairs,
)
from tests.helpers import cloud_grid


AABB3D = registry.AABB3D
Detection = registry.Detection


def _box(x: float, y: float = 0.0, size: float = 1.0):
    return AABB3D([x, y, 1.0], [size, size, size])


def test_find_best_iou_match() -> None:
    assert find_best_iou_match(_box(0.0), []) == (0.0, None)
    a, twin = _box(0.2), _box(0.2)
    score, best = find_best_iou_match(_box(0.0), [_box(5.0), a, twin])
    # equal overlap: the earlier candidate wins
    assert best is a
    assert score == pytest.approx(0.8 / 1.2)


def test_fuse_boxes_takes_max_dims_and_mean_center() -> None:
    fused = fuse_boxes(AABB3D([0.0, 0.0, 0.0], [1.0, 0.4, 2.0]), AABB3D([0.2, 0.0, 0.2], [0.6, 0.8, 1.0]))
    assert np.allclose(fused.center, [0.1, 0.0, 0.1])
    assert np.allclose(fused.dims, [1.0, 0.8, 2.0])


def test_match_pairs_requires_mutual_best() -> None:
    left = [_box(0.0), _box(0.3)]
    right = [_box(0.05)]
    # both left boxes prefer the single right box; only the mutual best pair survives
    assert match_pairs(left, right) == [(0, 0)]
    assert match_pairs([], right) == []
    assert match_pairs(left, []) == []


def test_match_pairs_threshold_is_strict() -> None:
    left, right = [_box(0.0)], [_box(0.5)]
    assert match_pairs(left, right, registry.schemas.EnsembleConfig(iou_threshold=1.0 / 3.0)) == []
    assert match_pairs(left, right, registry.schemas.EnsembleConfig(iou_threshold=0.33)) == [(0, 0)]


def test_ensemble_pair_fuses_only_matches() -> None:
    fused = ensemble_pair([_box(0.0), _box(4.0)], [_box(0.1), _box(8.0)])
    assert len(fused) == 1
    assert fused[0].center[0] == pytest.approx(0.05)


def test_ensemble_detections_carry_the_cluster_cloud() -> None:
    cloud = cloud_grid([-0.4, -0.4, 0.6], [0.4, 0.4, 1.4], 0.2)
    dets = ensemble_detections([_box(0.0), _box(3.0)], [(_box(0.1), cloud)])
    assert len(dets) == 1
    assert dets[0].cloud is cloud
    assert dets[0].label is None
    assert not dets[0].dynamic_override


def test_cascade_labels_matches_and_appends_dynamic_only() -> None:
    primary = [
        Detection(_box(0.0), registry.PointCloud.empty()),
        Detection(_box(5.0), registry.PointCloud.empty()),
    ]
    resampled = cloud_grid([2.0, 2.0, 0.5], [2.4, 2.4, 1.5], 0.1)
    mad_dets = [
        (_box(0.1), "person"),
        (_box(2.0, 2.0), "person"),
        (_box(-3.0, 2.0), "chair"),
    ]
    out = cascade_madlift(primary, mad_dets, resample=lambda box: resampled)
    assert len(out) == 3
    assert out[0].label == "person" and out[0].dynamic_override
    assert out[0].box.center[0] == pytest.approx(0.05)
    assert out[1] is primary[1]
    assert out[2].label == "person" and out[2].dynamic_override
    assert out[2].cloud is resampled


def test_cascade_drops_unmatched_person_box_overlapping_a_detection() -> None:
    primary = [Detection(_box(0.0), registry.PointCloud.empty())]
    # IOU about 0.03: too little to match, enough to be a mislocated duplicate
    stray = AABB3D([0.6, 0.0, 1.0], [0.5, 0.5, 0.5])
    out = cascade_madlift(primary, [(stray, "person")])
    assert len(out) == 1 and out[0] is primary[0]
    assert not out[0].dynamic_override
    clear = AABB3D([1.0, 0.0, 1.0], [0.5, 0.5, 0.5])
    assert len(cascade_madlift(primary, [(clear, "person")])) == 2


def test_cascade_with_static_label_and_no_mad_boxes() -> None:
    primary = [Detection(_box(0.0), registry.PointCloud.empty())]
    out = cascade_madlift(primary, [(_box(0.0), "chair")])
    assert out[0].label == "chair"
    assert not out[0].dynamic_override
    assert cascade_madlift(primary, []) == primary
