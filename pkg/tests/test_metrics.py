from __future__ import annotations

import json

import numpy as np
import pytest

from models.registry import registry
from services.metrics import evaluate, write_report
from services.performance_utils import mae, rmse, safe_div
from services.timing import StageTimer


ObstacleClass = registry.ObstacleClass
PipelineStage = registry.PipelineStage

PERSON_DIMS = (0.5, 0.5, 1.7)


def _truth(t: float, *objects) -> object:
    return registry.GroundTruthFrame(t, tuple(objects))


def _obj(object_id: int, center, cls=ObstacleClass.dynamic, velocity=(0.0, 1.0, 0.0)):
    return registry.types.GroundTruthObject(
        object_id, "person", cls, registry.AABB3D(center, PERSON_DIMS), np.asarray(velocity, dtype=float), 1.0
    )


def _out(t: float, track_id: int, center, cls=ObstacleClass.dynamic, velocity=(0.0, 1.0)):
    return registry.TrackOutput(t, track_id, cls, tuple(center), PERSON_DIMS, tuple(velocity))


def test_perfect_tracks_score_zero_error() -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85])), _truth(0.1, _obj(0, [3.0, 0.1, 0.85]))]
    outputs = [_out(0.0, 1, [3.0, 0.0, 0.85]), _out(0.1, 1, [3.0, 0.1, 0.85])]
    report = evaluate(outputs, truth)
    assert report.matched == 2
    assert report.pos_rmse == 0.0
    assert report.vel_rmse == 0.0
    assert report.fp_rate == 0.0
    assert report.id_switches == 0
    assert report.frames == 2


def test_position_and_velocity_errors() -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85]))]
    report = evaluate([_out(0.0, 1, [3.1, 0.0, 0.85], velocity=(0.0, 1.3))], truth)
    assert report.pos_rmse == pytest.approx(0.1)
    assert report.vel_rmse == pytest.approx(0.3)
    assert report.pos_mae == pytest.approx(0.1)


def test_static_match_is_a_misdetection_and_unmatched_track_a_ghost() -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85], cls=ObstacleClass.static, velocity=(0, 0, 0)))]
    outputs = [
        _out(0.0, 1, [3.0, 0.0, 0.85]),
        _out(0.0, 2, [6.0, 2.0, 0.85]),
        # STATIC outputs are not dynamic detections
        _out(0.0, 3, [3.0, 0.0, 0.85], cls=ObstacleClass.static),
    ]
    report = evaluate(outputs, truth)
    assert report.dynamic_detections == 2
    assert report.misdetections == 1
    assert report.ghosts == 1
    assert report.fp_rate == 0.5
    assert report.ghost_rate == 0.5
    assert report.matched == 0
    assert report.pos_rmse == 0.0
    assert report.records[0].ghosts == 1
    kinds = {a.track_id: a.truth_class for a in report.assignments}
    assert kinds == {1: ObstacleClass.static, 2: None}


def test_id_switch_counted_when_object_changes_track() -> None:
    truth = [_truth(k / 10.0, _obj(0, [3.0, k / 10.0, 0.85])) for k in range(4)]
    outputs = [_out(k / 10.0, 1 if k < 2 else 7, [3.0, k / 10.0, 0.85]) for k in range(4)]
    assert evaluate(outputs, truth).id_switches == 1
    # a gap does not reset the last matched track
    gapped = [o for o in outputs if o.timestamp != 0.1]
    assert evaluate(gapped, truth).id_switches == 1


def test_each_truth_object_matches_one_track() -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85]))]
    outputs = [_out(0.0, 1, [3.0, 0.0, 0.85]), _out(0.0, 2, [3.05, 0.0, 0.85])]
    report = evaluate(outputs, truth)
    assert report.matched == 1
    assert report.ghosts == 1 and report.misdetections == 0
    assert report.assignments[0].object_id == 0


def test_skip_frames_and_match_threshold() -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85])), _truth(0.1, _obj(0, [3.0, 0.0, 0.85]))]
    outputs = [_out(0.0, 1, [4.0, 0.0, 0.85]), _out(0.1, 1, [3.0, 0.0, 0.85])]
    report = evaluate(outputs, truth, skip_frames=1)
    assert report.frames == 1
    assert report.ghosts == 0
    assert evaluate(outputs, truth).ghosts == 1
    # center 0.3 m off on a 0.5 m box: IOU 0.25
    near = [_out(0.0, 1, [3.3, 0.0, 0.85])]
    assert evaluate(near, truth[:1], match_iou=0.2).matched == 1
    assert evaluate(near, truth[:1], match_iou=0.3).matched == 0


def test_evaluate_rejects_bad_input() -> None:
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate([_out(0.05, 1, [3.0, 0.0, 0.85])], [_truth(0.0), _truth(0.1)])
    with pytest.raises(ValueError):
        evaluate([], [_truth(0.0)], match_iou=0.0)
    empty = evaluate([], [_truth(0.0)])
    assert empty.fp_rate == 0.0 and empty.records[0].tracks == 0


def test_write_report(tmp_path) -> None:
    truth = [_truth(0.0, _obj(0, [3.0, 0.0, 0.85]))]
    report = evaluate([_out(0.0, 1, [3.0, 0.0, 0.85])], truth)
    write_report(tmp_path / "report.json", report)
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["matched"] == 1
    assert payload["assignments"][0]["truth_class"] == "DYNAMIC"
    assert "pos_errors" not in payload
    write_report(tmp_path / "summary.json", report, full=False)
    assert "records" not in json.loads((tmp_path / "summary.json").read_text())
    assert set(report.summary()) >= {"pos_rmse", "vel_rmse", "fp_rate", "id_switches", "matched"}


def test_error_helpers() -> None:
    assert safe_div(1.0, 0.0) == 0.0
    assert safe_div(1.0, 0.0, default=-1.0) == -1.0
    assert rmse([]) == 0.0
    assert rmse([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert mae([-1.0, 3.0]) == 2.0


def test_stage_timer_summary() -> None:
    timer = StageTimer()
    for ms in (1.0, 2.0, 3.0):
        timer.record(PipelineStage.udepth, ms)
        timer.record(PipelineStage.total, ms * 2)
        timer.end_frame()
    summary = timer.summary()
    assert summary["frames"] == 3
    assert summary["stages"][PipelineStage.udepth.value]["median_ms"] == 2.0
    assert summary["stages"][PipelineStage.total.value]["max_ms"] == 6.0
    assert summary["stages"][PipelineStage.udepth.value]["samples"] == 3

    disabled = StageTimer(enabled=False)
    with disabled.stage(PipelineStage.udepth):
        pass
    disabled.end_frame()
    assert disabled.summary() == {"frames": 0, "stages": {}}
