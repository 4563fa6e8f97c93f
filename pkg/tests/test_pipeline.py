from __future__ import annotations

import numpy as np
import pytest

from factories.scene_presets import (
    camera_sweep_reveals_box,
    empty_scene,
    far_object,
    noisy_suite,
    person_approaches_wall,
    static_scene,
    walker_scene,
)
from models.registry import registry
from services import sequence_io
from services.pipeline import (
    ABLATION_VARIANTS,
    FrameProcessor,
    ablation_table,
    bench,
    run_ablation_frames,
    run_frames,
    run_sequence,
    variant_config,
)
from services.scenegen import write_sequence
from tests.helpers import render


PipelineConfig = registry.PipelineConfig
ObstacleClass = registry.ObstacleClass


def _cfg(intr, **kwargs):
    return PipelineConfig(intrinsics=intr, **kwargs)


def test_empty_scene_produces_no_tracks(small_intr) -> None:
    frames, truth = render(empty_scene(duration=0.2), small_intr)
    result = run_frames(frames, _cfg(small_intr), truth)
    assert result.frames == len(frames) == 7
    assert result.outputs == []
    assert result.report.dynamic_detections == 0
    assert result.summary()["tracks"] == 0


def test_walker_is_tracked_and_labeled_dynamic(medium_intr) -> None:
    frames, truth = render(walker_scene(duration=1.5), medium_intr, with_detections2d=False)
    result = run_frames(frames, _cfg(medium_intr, enable_madlift=False), truth)
    dynamic = [o for o in result.outputs if o.obstacle_class == ObstacleClass.dynamic]
    assert dynamic
    assert result.report.matched > 0
    assert result.summary()["dynamic_rows"] == len(dynamic)


def _frame_of(row) -> int:
    return int(round(row.timestamp * 30.0))


def test_walker_turns_dynamic_within_five_frames_of_confirmation(medium_intr) -> None:
    frames, _ = render(walker_scene(speed=1.0), medium_intr, with_detections2d=False)
    result = run_frames(frames, _cfg(medium_intr, enable_madlift=False))
    longest = max({o.track_id for o in result.outputs}, key=lambda i: sum(o.track_id == i for o in result.outputs))
    rows = [o for o in result.outputs if o.track_id == longest]
    confirmed = min(_frame_of(o) for o in rows)
    dynamic = [_frame_of(o) for o in rows if o.obstacle_class == ObstacleClass.dynamic]
    assert dynamic
    assert min(dynamic) - confirmed <= 5


@pytest.mark.parametrize("noise, max_pos, max_vel", [(None, 0.05, 0.1), (0.01, 0.15, 0.3)])
def test_walker_errors_within_bounds(medium_intr, noise, max_pos, max_vel) -> None:
    model = None if noise is None else registry.NoiseModel(sigma_ratio=noise, seed=5)
    frames, truth = render(walker_scene(speed=1.0), medium_intr, model)
    report = run_frames(frames, _cfg(medium_intr), truth, skip_eval_frames=10).report
    assert report.matched >= 30
    assert report.pos_rmse <= max_pos
    assert report.vel_rmse <= max_vel
    assert report.id_switches == 0


def test_static_scene_has_no_dynamic_rows(medium_intr) -> None:
    frames, truth = render(static_scene(), medium_intr)
    assert len(frames) == 50
    result = run_frames(frames, _cfg(medium_intr), truth)
    assert result.summary()["tracks"] >= 3
    assert result.summary()["dynamic_rows"] == 0
    assert result.report.misdetections == 0


@pytest.mark.parametrize("use_filter", [True, False])
def test_camera_sweep_needs_the_visibility_filter(medium_intr, use_filter) -> None:
    frames, _ = render(camera_sweep_reveals_box(), medium_intr, with_detections2d=False)
    cfg = _cfg(medium_intr, enable_madlift=False, identify={"use_visibility_filter": use_filter})
    classes = [o.obstacle_class for o in run_frames(frames, cfg).outputs]
    if use_filter:
        assert ObstacleClass.static in classes
        assert ObstacleClass.dynamic not in classes
    else:
        # newly revealed wall reads as motion along the sweep
        assert ObstacleClass.dynamic in classes


def test_feature_association_survives_lost_person_and_nearby_cart(medium_intr) -> None:
    frames, truth = render(person_approaches_wall(), medium_intr)
    variants = {name: ABLATION_VARIANTS[name] for name in ("full", "center_distance_cv")}
    results = run_ablation_frames(frames, truth, _cfg(medium_intr), variants)
    full, baseline = results["full"].report, results["center_distance_cv"].report
    assert full.id_switches == 0
    assert baseline.id_switches >= 1
    assert full.pos_rmse < baseline.pos_rmse


def test_ensemble_halves_false_positive_rate_on_noisy_scenes(medium_intr) -> None:
    variants = {name: ABLATION_VARIANTS[name] for name in ("full", "udepth_only")}
    totals = {name: [0, 0] for name in variants}
    for script, noise in noisy_suite(count=4, duration=6.0):
        frames, truth = render(script, medium_intr, noise)
        for name, result in run_ablation_frames(frames, truth, _cfg(medium_intr), variants).items():
            totals[name][0] += result.report.misdetections
            totals[name][1] += result.report.dynamic_detections
    rate = {name: mis / max(count, 1) for name, (mis, count) in totals.items()}
    assert totals["full"][1] > 0 and totals["udepth_only"][1] > 0
    assert rate["full"] <= 0.5 * rate["udepth_only"]


def test_runs_are_deterministic_and_parallel_matches_sequential(small_intr) -> None:
    frames, _ = render(walker_scene(duration=0.5), small_intr)
    first = run_frames(frames, _cfg(small_intr))
    second = run_frames(frames, _cfg(small_intr))
    parallel = run_frames(frames, _cfg(small_intr, parallel_detectors=True))
    assert first.detections_digest == second.detections_digest == parallel.detections_digest
    assert first.outputs == second.outputs == parallel.outputs


def test_far_object_is_recovered_by_madlift_only(medium_intr) -> None:
    frames, truth = render(far_object(distance=5.0), medium_intr)
    cfg = _cfg(medium_intr, udepth={"max_range": 3.0}, dbscan={"max_range": 3.0})
    with FrameProcessor(cfg) as proc:
        fd = proc.detect(frames[0])
    assert fd.udepth == [] and fd.dbscan == []
    assert len(fd.madlift) == 1
    box, label = fd.madlift[0]
    assert label == "person"
    assert np.linalg.norm(box.center - truth[0].objects[0].box.center) < 0.2
    assert len(fd.detections) == 1
    assert fd.detections[0].dynamic_override
    assert len(fd.detections[0].cloud) > 0


def test_madlift_boxes_pass_through_without_ensemble(medium_intr) -> None:
    frames, _ = render(far_object(distance=5.0), medium_intr)
    cfg = _cfg(medium_intr, enable_ensemble=False, udepth={"max_range": 3.0}, dbscan={"max_range": 3.0})
    with FrameProcessor(cfg) as proc:
        fd = proc.detect(frames[0])
    assert len(fd.detections) == 1
    assert fd.detections[0].label == "person"
    assert fd.detections[0].dynamic_override


def test_ablation_variants_share_detections(small_intr) -> None:
    frames, truth = render(static_scene(duration=0.2), small_intr)
    variants = {name: ABLATION_VARIANTS[name] for name in ("full", "center_distance_cv", "udepth_only")}
    results = run_ablation_frames(frames, truth, _cfg(small_intr), variants)
    assert results["full"].detections_digest == results["center_distance_cv"].detections_digest
    assert results["full"].detections_digest != results["udepth_only"].detections_digest
    table = ablation_table(results)
    assert table["variant"].tolist() == list(variants)
    with pytest.raises(ValueError):
        run_ablation_frames(frames, [], _cfg(small_intr))


def test_variant_config_validates(small_intr) -> None:
    cfg = variant_config(_cfg(small_intr), {"tracker": {"association": "CENTER_DISTANCE"}})
    assert cfg.tracker.association == registry.AssociationMode.center_distance
    assert cfg.intrinsics == small_intr
    with pytest.raises(ValueError):
        variant_config(_cfg(small_intr), {"enable_dbscan": False, "enable_madlift": False})


def test_malformed_frames_are_skipped(small_intr) -> None:
    frames, _ = render(walker_scene(duration=0.2), small_intr)
    stream = [frames[0], sequence_io.SequenceFormatError("bad frame"), frames[2], frames[1], frames[3]]
    result = run_frames(stream, _cfg(small_intr))
    assert result.frames == 3
    assert result.skipped == [1, 1]


def test_run_sequence_writes_outputs(tmp_path, small_intr) -> None:
    seq = write_sequence(walker_scene(duration=0.3), tmp_path / "walker", small_intr)
    out = tmp_path / "out"
    result = run_sequence(seq, PipelineConfig(), out)
    assert result.frames == 10
    assert (out / sequence_io.REPORT_FILE).exists()
    assert (out / sequence_io.TIMING_FILE).exists()
    rows = sequence_io.read_tracks(out / sequence_io.TRACKS_FILE)
    assert len(rows) == len(result.outputs)
    with pytest.raises(FileNotFoundError):
        run_sequence(tmp_path / "missing")


def test_bench_reports_stage_times(small_intr) -> None:
    result = bench(_cfg(small_intr), num_frames=3)
    assert result["frames"] == 3
    assert result["objects"] == 5
    assert result["resolution"] == [160, 120]
    stages = result["timing"]["stages"]
    assert {"UDEPTH", "DBSCAN", "TOTAL"} <= set(stages)
    assert "MADLIFT" not in stages
    assert result["median_frame_ms"] == stages["TOTAL"]["median_ms"]


def test_bench_checks_median_frame_time_against_budget(monkeypatch) -> None:
    monkeypatch.setenv("DODT_FRAME_BUDGET_MS", "250")
    result = bench(PipelineConfig(), num_frames=20)
    assert result["resolution"] == [640, 480]
    assert result["budget_ms"] == 250.0
    assert result["within_budget"]
    assert result["median_frame_ms"] <= result["budget_ms"]
    tight = bench(PipelineConfig(), num_frames=3, budget_ms=1e-6)
    assert not tight["within_budget"]
