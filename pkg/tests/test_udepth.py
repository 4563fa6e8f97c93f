from __future__ import annotations

import numpy as np
import pytest

from factories.scene_presets import single_box
from models.registry import registry
from services.geometry import iou3d
from services.scenegen import render_frame
from services.udepth import UDepthMap, compute_u_depth, continuity_search, detect_udepth, group_lines
from tests.helpers import depth_from_meters


def _tiny_intr(width: int, height: int):
    return registry.CameraIntrinsics(fx=2.0, fy=2.0, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def test_u_depth_histogram_counts_valid_pixels_per_column() -> None:
    intr = _tiny_intr(2, 4)
    meters = np.array([[1.0, 0.0], [1.0, 12.0], [3.0, 0.0], [3.0, 0.0]])
    umap = compute_u_depth(depth_from_meters(meters), intr, bin_size=0.5)
    # bins start at depth_min = 0.3
    assert umap.counts[1, 0] == 2
    assert umap.counts[5, 0] == 2
    assert umap.counts[:, 0].sum() == 4
    assert umap.counts[:, 1].sum() == 0
    assert umap.num_bins == int(np.ceil((10.0 - 0.3) / 0.5))


def test_u_depth_rejects_bad_input() -> None:
    intr = _tiny_intr(2, 4)
    with pytest.raises(ValueError):
        compute_u_depth(depth_from_meters(np.ones((4, 2))), intr, bin_size=0.0)
    with pytest.raises(ValueError):
        compute_u_depth(depth_from_meters(np.ones((3, 2))), intr, bin_size=0.1)


def _umap(counts: np.ndarray) -> UDepthMap:
    return UDepthMap(counts.shape[1], counts.shape[0], counts, 0.1, 0.3)


def test_group_lines_merges_diagonal_steps_and_drops_narrow_runs() -> None:
    counts = np.zeros((10, 20), dtype=np.int64)
    # an oblique surface stepping one bin every two columns
    for u in range(0, 8):
        counts[2 + u // 2, u] = 9
    # a narrow post, too thin to keep
    counts[7, 15:17] = 9
    # below threshold
    counts[8, 10:14] = 3
    regions = group_lines(_umap(counts), count_threshold=4, min_width=4)
    assert len(regions) == 1
    r = regions[0]
    assert (r.u_min, r.u_max, r.b_min, r.b_max) == (0, 7, 2, 5)
    assert r.near == pytest.approx(0.5)
    assert r.far == pytest.approx(0.9)
    with pytest.raises(ValueError):
        group_lines(_umap(counts), count_threshold=0, min_width=4)


def test_continuity_search_returns_longest_row_run() -> None:
    intr = _tiny_intr(8, 40)
    meters = np.zeros((40, 8))
    meters[5:10, :] = 2.05
    meters[15:32, :] = 2.05
    meters[20, :] = 0.0  # a gap splits the long run
    depth = depth_from_meters(meters)
    umap = compute_u_depth(depth, intr, 0.1)
    regions = group_lines(umap, count_threshold=4, min_width=4)
    assert len(regions) == 1
    assert continuity_search(depth, intr, regions[0]) == (21, 31)


def test_single_cube_gives_one_box_with_hidden_extent(small_intr, camera_pose) -> None:
    script = single_box(distance=2.0, size=1.0)
    depth, truth = render_frame(script, 0.0, small_intr)
    boxes = detect_udepth(depth, small_intr, camera_pose)
    assert len(boxes) == 1
    box = boxes[0]
    assert box.lo[0] == pytest.approx(2.0, abs=0.02)
    # only the front face is visible; depth comes from hidden-extent completion
    assert box.dims[0] == pytest.approx(1.0, abs=0.02)
    assert box.dims[1] == pytest.approx(1.018, abs=0.03)
    assert box.dims[2] == pytest.approx(1.018, abs=0.03)
    assert iou3d(box, truth.objects[0].box) > 0.8


def test_hidden_extent_can_be_disabled(small_intr, camera_pose) -> None:
    depth, _ = render_frame(single_box(), 0.0, small_intr)
    cfg = registry.schemas.UDepthConfig(complete_hidden_depth=False)
    (box,) = detect_udepth(depth, small_intr, camera_pose, cfg)
    assert box.dims[0] < 0.05


def test_empty_or_out_of_range_depth_gives_no_boxes(small_intr, camera_pose) -> None:
    assert detect_udepth(depth_from_meters(np.zeros((120, 160))), small_intr, camera_pose) == []
    depth, _ = render_frame(single_box(distance=2.0), 0.0, small_intr)
    cfg = registry.schemas.UDepthConfig(max_range=1.5)
    assert detect_udepth(depth, small_intr, camera_pose, cfg) == []


def _slanted_patch():
    meters = np.zeros((120, 160))
    # 40 columns stepping 2 mm deeper each, all inside one or two depth bins
    meters[40:80, 60:100] = 2.0 + 0.002 * np.arange(40)
    return depth_from_meters(meters)


def test_depth_percentiles_bound_the_lifted_depth_extent(small_intr, camera_pose) -> None:
    depth = _slanted_patch()
    full = registry.schemas.UDepthConfig(complete_hidden_depth=False, depth_percentiles=[0.0, 100.0])
    inner = registry.schemas.UDepthConfig(complete_hidden_depth=False, depth_percentiles=[25.0, 75.0])
    (wide,) = detect_udepth(depth, small_intr, camera_pose, full)
    (narrow,) = detect_udepth(depth, small_intr, camera_pose, inner)
    assert wide.lo[0] == pytest.approx(2.0, abs=1e-6)
    assert wide.dims[0] == pytest.approx(0.078, abs=1e-6)
    assert narrow.lo[0] == pytest.approx(2.0195, abs=1e-6)
    assert narrow.dims[0] == pytest.approx(0.039, abs=1e-6)


def test_depth_percentiles_must_be_an_ordered_pair() -> None:
    assert registry.schemas.UDepthConfig().depth_percentiles == [2.0, 98.0]
    for bad in ([98.0, 2.0], [0.0, 101.0], [5.0]):
        with pytest.raises(ValueError):
            registry.schemas.UDepthConfig(depth_percentiles=bad)
