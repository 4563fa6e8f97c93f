"""
Frame pipeline: detectors -> ensemble cascade -> tracker -> identification -> outputs.

Each frame is processed from one immutable FrameRecord; the three detectors may run on a
thread pool without changing results. Tracking and identification are sequential.

Recommended improvements:
- Pipeline frames (detect frame n+1 while tracking frame n) for throughput on long sequences.
- Persist the ablation detection cache to disk between CLI invocations.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from core_utils import deep_merge, get_logger, get_settings
from models.registry import registry
from services import sequence_io
from services.dbscan import detect_dbscan, voxel_filter
from services.ensemble import cascade_madlift, ensemble_detections
from services.geometry import cloud_in_box, complete_hidden_extent, triangulate
from services.identify import Identifier
from services.madlift import detect_madlift
from services.metrics import EvalReport, evaluate, write_report
from services.timing import StageTimer
from services.tracker import ObstacleTracker
from services.udepth import detect_udepth
from services.validators import validate_pipeline_config


logger = get_logger(__name__)

Detection = registry.Detection
PipelineStage = registry.PipelineStage
DetectorName = registry.enums.DetectorName

ABLATION_VARIANTS: dict[str, dict[str, Any]] = {
    "full": {},
    "udepth_only": {"enable_dbscan": False, "enable_madlift": False, "enable_ensemble": False},
    "center_distance_cv": {"tracker": {"association": "CENTER_DISTANCE", "motion_model": "CONSTANT_VELOCITY"}},
}

# config sections that decide what the detectors produce
DETECTOR_SECTIONS = (
    "intrinsics",
    "udepth",
    "dbscan",
    "madlift",
    "ensemble",
    "enable_udepth",
    "enable_dbscan",
    "enable_madlift",
    "enable_ensemble",
)


@dataclass(eq=False)
class FrameDetections:
    index: int
    timestamp: float
    udepth: list = field(default_factory=list)
    dbscan: list = field(default_factory=list)  # (AABB3D, PointCloud)
    madlift: list = field(default_factory=list)  # (AABB3D, label)
    detections: list = field(default_factory=list)  # Detection handed to the tracker


@dataclass
class PipelineResult:
    outputs: list
    report: Optional[EvalReport]
    timing: dict
    detections_digest: str
    frames: int
    skipped: list[int] = field(default_factory=list)

    def summary(self) -> dict:
        out = {
            "frames": self.frames,
            "skipped": len(self.skipped),
            "track_rows": len(self.outputs),
            "tracks": len({o.track_id for o in self.outputs}),
            "dynamic_rows": sum(o.obstacle_class == registry.ObstacleClass.dynamic for o in self.outputs),
            "detections_digest": self.detections_digest,
        }
        if self.report is not None:
            out["report"] = self.report.summary()
        return out


def _timed(fn: Callable[[], Any]) -> tuple[Any, float]:
    start = time.perf_counter()
    result = fn()
    return result, (time.perf_counter() - start) * 1000.0


def detector_key(cfg) -> str:
    """Hash of the config sections that determine detector output."""
    dumped = cfg.model_dump(mode="json", include=set(DETECTOR_SECTIONS))
    return hashlib.sha1(json.dumps(dumped, sort_keys=True).encode("utf-8")).hexdigest()


def detections_digest(frames: Iterable[FrameDetections]) -> str:
    h = hashlib.sha1()
    for fd in frames:
        h.update(np.float64(fd.timestamp).tobytes())
        for det in fd.detections:
            h.update(np.round(det.box.center, 9).tobytes())
            h.update(np.round(det.box.dims, 9).tobytes())
            h.update(np.int64(len(det.cloud)).tobytes())
            h.update((det.label or "").encode("utf-8"))
    return h.hexdigest()


class FrameProcessor:
    """Per-run state: tracker, identifier, timer and the optional detector thread pool."""

    def __init__(self, cfg, timer: Optional[StageTimer] = None):
        self.cfg = cfg
        self.intr = cfg.intrinsics
        self.tracker = ObstacleTracker(cfg.tracker)
        self.identifier = Identifier(
            cfg.identify, cfg.intrinsics, capacity=cfg.identify.k_back + cfg.tracker.death_misses + 1
        )
        self.timer = timer or StageTimer(cfg.timing)
        self._pool = ThreadPoolExecutor(max_workers=3) if cfg.parallel_detectors else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> "FrameProcessor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # Detection

    def _run_detectors(self, frame) -> dict[str, Any]:
        cfg, intr = self.cfg, self.intr
        jobs: dict[str, Callable[[], Any]] = {}
        if cfg.enable_udepth:
            jobs[DetectorName.udepth.value] = lambda: detect_udepth(frame.depth, intr, frame.pose, cfg.udepth)
        if cfg.enable_dbscan:
            jobs[DetectorName.dbscan.value] = lambda: detect_dbscan(frame.depth, intr, frame.pose, cfg.dbscan)
        if cfg.enable_madlift:
            jobs[DetectorName.madlift.value] = lambda: detect_madlift(
                frame.detections2d or (), frame.depth, intr, frame.pose, cfg.madlift
            )
        if self._pool is not None and len(jobs) > 1:
            futures = {name: self._pool.submit(_timed, fn) for name, fn in jobs.items()}
            results = {name: f.result() for name, f in futures.items()}
        else:
            results = {name: _timed(fn) for name, fn in jobs.items()}
        out = {}
        for name, (value, ms) in results.items():
            self.timer.record(PipelineStage(name), ms)
            out[name] = value
        return out

    def detect(self, frame) -> FrameDetections:
        cfg = self.cfg
        raw = self._run_detectors(frame)
        hidden = cfg.udepth.max_hidden_depth
        fd = FrameDetections(frame.index, frame.timestamp)
        fd.udepth = raw.get(DetectorName.udepth.value, [])
        fd.dbscan = [
            (complete_hidden_extent(box, frame.pose, hidden), cloud)
            for box, cloud in raw.get(DetectorName.dbscan.value, [])
        ]
        fd.madlift = [
            (complete_hidden_extent(box, frame.pose, hidden), label)
            for box, label in raw.get(DetectorName.madlift.value, [])
        ]

        tri_cache: dict[str, Any] = {}

        def resample(box):
            if "cloud" not in tri_cache:
                with self.timer.stage(PipelineStage.triangulate):
                    tri_cache["cloud"] = triangulate(frame.depth, self.intr, frame.pose, cfg.dbscan.stride)
            inside = cloud_in_box(tri_cache["cloud"], box)
            return voxel_filter(inside, cfg.dbscan.voxel_size, min_points=1)

        with self.timer.stage(PipelineStage.ensemble):
            fd.detections = self._combine(fd, resample)
        logger.debug(
            f"frame {frame.index}: udepth={len(fd.udepth)} dbscan={len(fd.dbscan)} "
            f"madlift={len(fd.madlift)} -> {len(fd.detections)} detections"
        )
        return fd

    def _combine(self, fd: FrameDetections, resample: Callable) -> list:
        cfg = self.cfg
        classes = tuple(cfg.madlift.dynamic_classes)
        if cfg.enable_ensemble and cfg.enable_udepth and cfg.enable_dbscan:
            primary = ensemble_detections(fd.udepth, fd.dbscan, cfg.ensemble)
        elif cfg.enable_udepth:
            primary = [Detection(box, resample(box)) for box in fd.udepth]
        elif cfg.enable_dbscan:
            primary = [Detection(box, cloud) for box, cloud in fd.dbscan]
        else:
            primary = []
        if not cfg.enable_madlift:
            return primary
        if cfg.enable_ensemble:
            return cascade_madlift(primary, fd.madlift, cfg.ensemble, classes, resample)
        # no fusion: MAD-lift boxes ride alongside the depth detector's boxes
        return primary + [
            Detection(box, resample(box), label, registry.utils.is_dynamic_label(label, classes))
            for box, label in fd.madlift
        ]

    # Tracking and identification

    def track(self, frame, fd: FrameDetections) -> list:
        with self.timer.stage(PipelineStage.tracking):
            confirmed = self.tracker.step(fd.detections, frame.timestamp, frame.index)
        with self.timer.stage(PipelineStage.identify):
            self.identifier.observe(frame)
            self.identifier.update(confirmed, frame.index)
        return [t.to_output(frame.timestamp) for t in confirmed]


def _frame_source(frames) -> Iterable:
    return frames() if callable(frames) else frames


def run_frames(
    frames: Iterable | Callable[[], Iterable],
    cfg=None,
    truth: Optional[Sequence] = None,
    detection_cache: Optional[dict[str, list]] = None,
    skip_eval_frames: int = 0,
) -> PipelineResult:
    """Process FrameRecords in order; malformed items (exceptions or bad frames) are skipped with a warning."""
    cfg = cfg or registry.PipelineConfig()
    validate_pipeline_config(cfg)
    key = detector_key(cfg)
    cached = detection_cache.get(key) if detection_cache is not None else None
    cached_by_index = {fd.index: fd for fd in cached} if cached is not None else None

    outputs, skipped, produced = [], [], []
    last_time: Optional[float] = None
    timer = StageTimer(cfg.timing)
    with FrameProcessor(cfg, timer) as proc:
        for position, item in enumerate(_frame_source(frames)):
            if isinstance(item, Exception):
                logger.warning(f"skipping frame {position}: {item}")
                skipped.append(position)
                continue
            if last_time is not None and item.timestamp <= last_time:
                logger.warning(f"skipping frame {item.index}: timestamp {item.timestamp} not increasing")
                skipped.append(item.index)
                continue
            start = time.perf_counter()
            try:
                if cached_by_index is not None and item.index in cached_by_index:
                    fd = cached_by_index[item.index]
                else:
                    fd = proc.detect(item)
                outputs.extend(proc.track(item, fd))
            except ValueError as e:
                logger.warning(f"skipping frame {item.index}: {e}")
                skipped.append(item.index)
                timer.end_frame()
                continue
            timer.record(PipelineStage.total, (time.perf_counter() - start) * 1000.0)
            timer.end_frame()
            produced.append(fd)
            last_time = item.timestamp

    if detection_cache is not None and cached is None:
        detection_cache[key] = produced
    report = None
    if truth:
        report = evaluate(outputs, truth, cfg.evaluation.match_iou, skip_frames=skip_eval_frames)
    result = PipelineResult(outputs, report, timer.summary(), detections_digest(produced), len(produced), skipped)
    logger.info(f"processed {result.frames} frames ({len(skipped)} skipped), {len(outputs)} track rows")
    return result


def _with_sequence_intrinsics(cfg, seq):
    return cfg.model_copy(update={"intrinsics": seq.intrinsics})


def write_outputs(out_dir: str | Path, result: PipelineResult) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    sequence_io.write_tracks(root / sequence_io.TRACKS_FILE, result.outputs)
    sequence_io.write_json(root / sequence_io.TIMING_FILE, result.timing)
    if result.report is not None:
        write_report(root / sequence_io.REPORT_FILE, result.report)
    return root


def run_sequence(path: str | Path, cfg=None, out_dir: Optional[str | Path] = None) -> PipelineResult:
    """Run the pipeline over a recorded sequence; writes tracks/report/timing when out_dir is set."""
    cfg = cfg or registry.PipelineConfig()
    seq = sequence_io.load_sequence(path)
    cfg = _with_sequence_intrinsics(cfg, seq)
    logger.info(f"running '{seq.name}': {len(seq)} frames, detectors={cfg.enabled_detectors}")
    result = run_frames(seq.frames, cfg, seq.truth)
    out_dir = out_dir or cfg.output_dir
    if out_dir:
        write_outputs(out_dir, result)
    return result


def variant_config(cfg, overrides: dict[str, Any]):
    merged = deep_merge(cfg.model_dump(mode="json"), overrides)
    variant = registry.PipelineConfig.model_validate(merged)
    validate_pipeline_config(variant)
    return variant


def run_ablation_frames(
    frames: Callable[[], Iterable],
    truth: Sequence,
    cfg=None,
    variants: Optional[dict[str, dict[str, Any]]] = None,
    skip_eval_frames: int = 0,
) -> dict[str, PipelineResult]:
    """Run each variant over the same frames; variants with equal detector settings share detections."""
    if not truth:
        raise ValueError("ablation requires ground truth")
    cfg = cfg or registry.PipelineConfig()
    variants = variants or ABLATION_VARIANTS
    cache: dict[str, list] = {}
    results = {}
    for name, overrides in variants.items():
        logger.info(f"ablation variant '{name}'")
        results[name] = run_frames(frames, variant_config(cfg, overrides), truth, cache, skip_eval_frames)
    return results


def run_ablation(
    path: str | Path, cfg=None, variants: Optional[dict[str, dict[str, Any]]] = None
) -> dict[str, PipelineResult]:
    cfg = cfg or registry.PipelineConfig()
    seq = sequence_io.load_sequence(path)
    if not seq.truth:
        raise ValueError(f"sequence {path} has no ground truth")
    return run_ablation_frames(seq.frames, seq.truth, _with_sequence_intrinsics(cfg, seq), variants)


def ablation_table(results: dict[str, PipelineResult]) -> pd.DataFrame:
    rows = []
    for name, result in results.items():
        report = result.report
        rows.append(
            {
                "variant": name,
                "pos_rmse": report.pos_rmse if report else None,
                "vel_rmse": report.vel_rmse if report else None,
                "fp_rate": report.fp_rate if report else None,
                "ghost_rate": report.ghost_rate if report else None,
                "id_switches": report.id_switches if report else None,
                "dynamic_detections": report.dynamic_detections if report else None,
                "detections_digest": result.detections_digest[:12],
            }
        )
    return pd.DataFrame(rows)


def bench(cfg=None, num_frames: int = 30, seed: int = 0, budget_ms: Optional[float] = None) -> dict:
    """Per-stage compute time of the non-learning pipeline on the 5-object scene rendered in memory.

    The median frame time is checked against budget_ms (default: DODT_FRAME_BUDGET_MS).
    """
    from factories.scene_presets import bench_scene
    from services.scenegen import render_sequence

    cfg = cfg or registry.PipelineConfig()
    cfg = cfg.model_copy(update={"enable_madlift": False, "timing": True})
    budget = get_settings().DODT_FRAME_BUDGET_MS if budget_ms is None else budget_ms
    script = bench_scene(duration=(num_frames - 1) / 30.0, seed=seed)
    frames = [f for f, _ in render_sequence(script, cfg.intrinsics, with_detections2d=False)]
    result = run_frames(frames, cfg)
    total = result.timing["stages"].get(PipelineStage.total.value, {})
    median = total.get("median_ms")
    if median is not None and median > budget:
        logger.warning(f"median frame time {median:.1f} ms exceeds the {budget:.1f} ms budget")
    return {
        "frames": result.frames,
        "resolution": [cfg.intrinsics.width, cfg.intrinsics.height],
        "objects": len(script.objects),
        "median_frame_ms": median,
        "budget_ms": budget,
        "within_budget": median is not None and median <= budget,
        "timing": result.timing,
    }
