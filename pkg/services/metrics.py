"""
Ground-truth evaluation of dynamic-obstacle tracks.

Per frame, DYNAMIC tracks are matched to ground-truth objects by descending IOU (at least
match_iou, one truth object per track). A match to a dynamic object contributes position
error (3D center distance) and velocity error (planar vector difference). A match to a
static object is a misdetection (a static obstacle identified as dynamic). A dynamic track
matching nothing is a ghost and is counted separately.

fp_rate = misdetections / dynamic detections; ghost_rate = ghosts / dynamic detections.

Recommended improvements:
- MOT-style summaries (MOTA, IDF1) on top of the assignment log.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, computed_field

from core_utils import get_logger
from models.registry import registry
from services.geometry import iou_matrix
from services.performance_utils import mae, rmse, safe_div
from services.sequence_io import write_json


logger = get_logger(__name__)

ObstacleClass = registry.ObstacleClass

TIME_TOLERANCE = 1e-6


class FrameEvalRecord(BaseModel):
    timestamp: float
    tracks: int
    dynamic_tracks: int
    matched: int
    misdetections: int
    ghosts: int = 0
    truth_dynamic: int


class Assignment(BaseModel):
    timestamp: float
    track_id: int
    object_id: Optional[int] = None
    truth_class: Optional[ObstacleClass] = None
    iou: float = 0.0
    pos_error: Optional[float] = None
    vel_error: Optional[float] = None


class EvalReport(BaseModel):
    """Aggregated tracking accuracy and false-positive rate over a sequence."""

    frames: int = 0
    dynamic_detections: int = 0
    misdetections: int = 0
    ghosts: int = 0
    id_switches: int = 0
    pos_errors: list[float] = Field(default_factory=list, exclude=True)
    vel_errors: list[float] = Field(default_factory=list, exclude=True)
    records: list[FrameEvalRecord] = Field(default_factory=list)
    assignments: list[Assignment] = Field(default_factory=list)

    @computed_field
    @property
    def matched(self) -> int:
        return len(self.pos_errors)

    @computed_field
    @property
    def pos_rmse(self) -> float:
        return rmse(self.pos_errors)

    @computed_field
    @property
    def pos_mae(self) -> float:
        return mae(self.pos_errors)

    @computed_field
    @property
    def vel_rmse(self) -> float:
        return rmse(self.vel_errors)

    @computed_field
    @property
    def vel_mae(self) -> float:
        return mae(self.vel_errors)

    @computed_field
    @property
    def fp_rate(self) -> float:
        return safe_div(self.misdetections, self.dynamic_detections)

    @computed_field
    @property
    def ghost_rate(self) -> float:
        return safe_div(self.ghosts, self.dynamic_detections)

    def summary(self) -> dict:
        """Headline numbers without the per-frame tables."""
        return self.model_dump(exclude={"records", "assignments"})

    def records_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.records])

    def assignments_frame(self) -> pd.DataFrame:
        return pd.DataFrame([a.model_dump(mode="json") for a in self.assignments])


def _match(tracks: Sequence, objects: Sequence, match_iou: float) -> dict[int, tuple[int, float]]:
    """track index -> (object index, iou); greedy by descending IOU, injective."""
    if not tracks or not objects:
        return {}
    scores = iou_matrix([t.box for t in tracks], [o.box for o in objects])
    ti, oi = np.nonzero(scores >= match_iou)
    order = np.lexsort((oi, ti, -scores[ti, oi]))
    out: dict[int, tuple[int, float]] = {}
    used = set()
    for k in order:
        a, b = int(ti[k]), int(oi[k])
        if a in out or b in used:
            continue
        out[a] = (b, float(scores[a, b]))
        used.add(b)
    return out


def _group_by_time(outputs: Iterable, timestamps: np.ndarray) -> dict[int, list]:
    grouped: dict[int, list] = defaultdict(list)
    for o in outputs:
        k = int(np.argmin(np.abs(timestamps - o.timestamp)))
        if abs(timestamps[k] - o.timestamp) > TIME_TOLERANCE:
            raise ValueError(f"track output at t={o.timestamp:.6f} has no ground-truth frame")
        grouped[k].append(o)
    return grouped


def evaluate(
    outputs: Iterable,
    truth: Sequence,
    match_iou: float = registry.enums.EvalDefaults.MATCH_IOU,
    skip_frames: int = 0,
) -> EvalReport:
    """Score track outputs against ground-truth frames; the first skip_frames frames are ignored."""
    if not truth:
        raise ValueError("cannot evaluate an empty sequence")
    if not 0 < match_iou <= 1:
        raise ValueError("match_iou must be in (0, 1]")
    frames = sorted(truth, key=lambda f: f.timestamp)
    timestamps = np.array([f.timestamp for f in frames])
    grouped = _group_by_time(outputs, timestamps)

    report = EvalReport()
    last_track: dict[int, int] = {}
    for k, frame in enumerate(frames):
        if k < skip_frames:
            continue
        tracks = sorted(grouped.get(k, []), key=lambda o: o.track_id)
        dynamic = [t for t in tracks if t.obstacle_class == ObstacleClass.dynamic]
        pairs = _match(dynamic, frame.objects, match_iou)
        matched = missed = ghosts = 0
        for i, track in enumerate(dynamic):
            if i not in pairs:
                ghosts += 1
                report.assignments.append(Assignment(timestamp=frame.timestamp, track_id=track.track_id))
                continue
            j, score = pairs[i]
            obj = frame.objects[j]
            entry = Assignment(
                timestamp=frame.timestamp,
                track_id=track.track_id,
                object_id=obj.object_id,
                truth_class=obj.obstacle_class,
                iou=score,
            )
            if obj.obstacle_class != ObstacleClass.dynamic:
                missed += 1
            else:
                matched += 1
                entry.pos_error = float(np.linalg.norm(np.asarray(track.center) - obj.box.center))
                entry.vel_error = float(np.linalg.norm(np.asarray(track.velocity) - obj.velocity[:2]))
                report.pos_errors.append(entry.pos_error)
                report.vel_errors.append(entry.vel_error)
                previous = last_track.get(obj.object_id)
                if previous is not None and previous != track.track_id:
                    report.id_switches += 1
                last_track[obj.object_id] = track.track_id
            report.assignments.append(entry)
        report.frames += 1
        report.dynamic_detections += len(dynamic)
        report.misdetections += missed
        report.ghosts += ghosts
        report.records.append(
            FrameEvalRecord(
                timestamp=frame.timestamp,
                tracks=len(tracks),
                dynamic_tracks=len(dynamic),
                matched=matched,
                misdetections=missed,
                ghosts=ghosts,
                truth_dynamic=sum(o.obstacle_class == ObstacleClass.dynamic for o in frame.objects),
            )
        )
    logger.info(
        f"evaluated {report.frames} frames: pos_rmse={report.pos_rmse:.3f} m, "
        f"vel_rmse={report.vel_rmse:.3f} m/s, fp_rate={report.fp_rate:.3%}, ghosts={report.ghosts}"
    )
    return report


def write_report(path: str | Path, report: EvalReport, full: bool = True) -> None:
    payload = report.model_dump(mode="json") if full else report.summary()
    write_json(Path(path), payload)
