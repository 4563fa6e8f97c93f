"""
On-disk sequence format.

A sequence directory holds:
- meta            key=value lines (intrinsics, depth_scale, depth range, frame_rate, num_frames, name)
- poses.csv       timestamp, tx, ty, tz, r00..r22 (row-major camera-to-world rotation)
- depth/NNNNNN.png  16-bit single-channel PNG, raw sensor units
- det2d/NNNNNN.txt  optional, one "u_min u_max v_min v_max label confidence" per line
- truth.csv       optional, one ground-truth object per line

Pipeline outputs (tracks.csv, report.json, timing.json) are written next to it or to --out.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional

import cv2
import numpy as np
import pandas as pd

from core_utils import get_logger
from models.registry import registry


logger = get_logger(__name__)

ObstacleClass = registry.ObstacleClass

META_FILE = "meta"
POSES_FILE = "poses.csv"
TRUTH_FILE = "truth.csv"
TRACKS_FILE = "tracks.csv"
REPORT_FILE = "report.json"
TIMING_FILE = "timing.json"
DEPTH_DIR = "depth"
DET2D_DIR = "det2d"

ROTATION_COLUMNS = [f"r{i}{j}" for i in range(3) for j in range(3)]
POSE_COLUMNS = ["timestamp", "tx", "ty", "tz", *ROTATION_COLUMNS]
TRUTH_COLUMNS = [
    "timestamp", "object_id", "label", "class", "cx", "cy", "cz", "dx", "dy", "dz", "vx", "vy", "vz", "visibility"
]
TRACK_COLUMNS = ["timestamp", "track_id", "class", "cx", "cy", "cz", "dx", "dy", "dz", "vx", "vy"]
INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height", "depth_scale", "depth_min", "depth_max")


class SequenceFormatError(ValueError):
    """Raised when a sequence directory or one of its frames does not follow the format."""


def frame_name(index: int) -> str:
    return f"{index:06d}"


def write_meta(path: Path, meta: dict[str, Any]) -> None:
    path.write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")


def read_meta(path: Path) -> dict[str, str]:
    if not path.exists():
        raise SequenceFormatError(f"missing {META_FILE} file in {path.parent}")
    meta: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SequenceFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    return meta


def write_depth_png(path: Path, depth) -> None:
    if not cv2.imwrite(str(path), depth.data):
        raise OSError(f"failed to write depth image {path}")


def read_depth_png(path: Path, intr):
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise SequenceFormatError(f"unreadable depth image {path}")
    if data.dtype != np.uint16 or data.ndim != 2:
        raise SequenceFormatError(f"{path}: expected single-channel 16-bit depth, got {data.dtype} {data.shape}")
    if data.shape != (intr.height, intr.width):
        raise SequenceFormatError(f"{path}: size {data.shape[::-1]} does not match intrinsics")
    return registry.DepthImage.from_array(data)


def write_det2d(path: Path, detections) -> None:
    lines = [f"{d.u_min!r} {d.u_max!r} {d.v_min!r} {d.v_max!r} {d.class_label} {d.confidence!r}\n" for d in detections]
    path.write_text("".join(lines), encoding="utf-8")


def read_det2d(path: Path) -> tuple:
    dets = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 6:
            raise SequenceFormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            u0, u1, v0, v1 = (float(x) for x in parts[:4])
            dets.append(registry.Detection2D(u0, u1, v0, v1, parts[4], float(parts[5])))
        except ValueError as e:
            raise SequenceFormatError(f"{path}:{lineno}: {e}")
    return tuple(dets)


def truth_rows(truth) -> list[dict[str, Any]]:
    rows = []
    for obj in truth.objects:
        rows.append(
            {
                "timestamp": truth.timestamp,
                "object_id": obj.object_id,
                "label": obj.label,
                "class": obj.obstacle_class.value,
                **dict(zip(("cx", "cy", "cz"), obj.box.center.tolist())),
                **dict(zip(("dx", "dy", "dz"), obj.box.dims.tolist())),
                **dict(zip(("vx", "vy", "vz"), np.asarray(obj.velocity).tolist())),
                "visibility": obj.visibility,
            }
        )
    return rows


def truth_from_frame(df: pd.DataFrame, timestamps: Optional[np.ndarray] = None) -> list:
    """Group a truth table into GroundTruthFrames ordered by timestamp.

    When timestamps are given, frames without rows become empty GroundTruthFrames.
    """
    frames = []
    groups = dict(tuple(df.groupby("timestamp", sort=True))) if not df.empty else {}
    keys = sorted(groups) if timestamps is None else [float(t) for t in timestamps]
    for ts in keys:
        group = groups.get(ts)
        if group is None:
            frames.append(registry.GroundTruthFrame(timestamp=float(ts), objects=()))
            continue
        objects = tuple(
            registry.types.GroundTruthObject(
                object_id=int(r.object_id),
                label=str(r.label),
                obstacle_class=ObstacleClass(str(r["class"]).upper()),
                box=registry.AABB3D((r.cx, r.cy, r.cz), (r.dx, r.dy, r.dz)),
                velocity=np.array([r.vx, r.vy, r.vz], dtype=np.float64),
                visibility=float(r.visibility),
            )
            for _, r in group.iterrows()
        )
        frames.append(registry.GroundTruthFrame(timestamp=float(ts), objects=objects))
    return frames


def read_truth(path: Path, timestamps: Optional[np.ndarray] = None) -> list:
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        df = pd.DataFrame(columns=TRUTH_COLUMNS)
    missing = set(TRUTH_COLUMNS) - set(df.columns)
    if missing:
        raise SequenceFormatError(f"{path}: missing columns {sorted(missing)}")
    return truth_from_frame(df, timestamps)


def write_tracks(path: Path, outputs) -> None:
    rows = [
        {
            "timestamp": o.timestamp,
            "track_id": o.track_id,
            "class": o.obstacle_class.value,
            **dict(zip(("cx", "cy", "cz"), o.center)),
            **dict(zip(("dx", "dy", "dz"), o.dims)),
            **dict(zip(("vx", "vy"), o.velocity)),
        }
        for o in outputs
    ]
    pd.DataFrame(rows, columns=TRACK_COLUMNS).to_csv(path, index=False)


def read_tracks(path: Path) -> list:
    if not Path(path).exists():
        raise FileNotFoundError(f"Track file not found: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return []
    missing = set(TRACK_COLUMNS) - set(df.columns)
    if missing:
        raise SequenceFormatError(f"{path}: missing columns {sorted(missing)}")
    return [
        registry.TrackOutput(
            timestamp=float(r.timestamp),
            track_id=int(r.track_id),
            obstacle_class=ObstacleClass(str(r["class"]).upper()),
            center=(float(r.cx), float(r.cy), float(r.cz)),
            dims=(float(r.dx), float(r.dy), float(r.dz)),
            velocity=(float(r.vx), float(r.vy)),
        )
        for _, r in df.iterrows()
    ]


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class SequenceWriter:
    """Incrementally writes frames (and optional truth) into a sequence directory."""

    def __init__(self, out_dir: str | Path, intr, frame_rate: float, name: str = "sequence"):
        self.root = Path(out_dir)
        self.intr = intr
        self.frame_rate = frame_rate
        self.name = name
        (self.root / DEPTH_DIR).mkdir(parents=True, exist_ok=True)
        self._poses: list[dict[str, float]] = []
        self._truth: list[dict[str, Any]] = []
        self._has_det2d = False
        self._has_truth = False

    def add(self, frame, truth=None) -> None:
        stem = frame_name(frame.index)
        write_depth_png(self.root / DEPTH_DIR / f"{stem}.png", frame.depth)
        if frame.detections2d is not None:
            (self.root / DET2D_DIR).mkdir(exist_ok=True)
            write_det2d(self.root / DET2D_DIR / f"{stem}.txt", frame.detections2d)
            self._has_det2d = True
        row = {"timestamp": frame.timestamp, "tx": 0.0, "ty": 0.0, "tz": 0.0}
        row.update(zip(("tx", "ty", "tz"), frame.pose.translation.tolist()))
        row.update(zip(ROTATION_COLUMNS, frame.pose.rotation.ravel().tolist()))
        self._poses.append(row)
        if truth is not None:
            self._has_truth = True
            self._truth.extend(truth_rows(truth))

    def close(self) -> Path:
        meta = {k: getattr(self.intr, k) for k in INTRINSIC_KEYS}
        meta.update({"frame_rate": self.frame_rate, "num_frames": len(self._poses), "name": self.name})
        write_meta(self.root / META_FILE, meta)
        pd.DataFrame(self._poses, columns=POSE_COLUMNS).to_csv(self.root / POSES_FILE, index=False)
        if self._has_truth:
            pd.DataFrame(self._truth, columns=TRUTH_COLUMNS).to_csv(self.root / TRUTH_FILE, index=False)
        return self.root


@dataclass
class RecordedSequence:
    root: Path
    intrinsics: Any
    frame_rate: float
    name: str
    poses: pd.DataFrame
    truth: Optional[list] = None
    meta: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.poses)

    def frames(self) -> Iterator[Any]:
        """Yield FrameRecords in timestamp order; a malformed frame yields its SequenceFormatError instead."""
        for index, row in enumerate(self.poses.itertuples(index=False)):
            try:
                yield self.load_frame(index, row)
            except SequenceFormatError as e:
                yield e

    def load_frame(self, index: int, row=None):
        row = row if row is not None else next(self.poses.iloc[[index]].itertuples(index=False))
        stem = frame_name(index)
        depth_path = self.root / DEPTH_DIR / f"{stem}.png"
        if not depth_path.exists():
            raise SequenceFormatError(f"missing depth image {depth_path}")
        depth = read_depth_png(depth_path, self.intrinsics)
        rotation = np.array([getattr(row, c) for c in ROTATION_COLUMNS], dtype=np.float64).reshape(3, 3)
        try:
            pose = registry.Pose((row.tx, row.ty, row.tz), rotation)
        except ValueError as e:
            raise SequenceFormatError(f"frame {stem}: invalid pose ({e})")
        det_path = self.root / DET2D_DIR / f"{stem}.txt"
        dets = read_det2d(det_path) if det_path.exists() else None
        return registry.FrameRecord(index, float(row.timestamp), depth, pose, dets)


def load_sequence(path: str | Path) -> RecordedSequence:
    """Validate the sequence layout and load meta, poses and truth; frames are read lazily."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"Sequence directory not found: {root}")
    meta = read_meta(root / META_FILE)
    try:
        intr = registry.CameraIntrinsics(
            **{k: float(meta[k]) for k in INTRINSIC_KEYS if k not in ("width", "height")},
            width=int(meta["width"]),
            height=int(meta["height"]),
        )
        frame_rate = float(meta.get("frame_rate", 30.0))
    except KeyError as e:
        raise SequenceFormatError(f"{root / META_FILE}: missing key {e}")
    except ValueError as e:
        raise SequenceFormatError(f"{root / META_FILE}: {e}")
    poses_path = root / POSES_FILE
    if not poses_path.exists():
        raise SequenceFormatError(f"missing {POSES_FILE} in {root}")
    poses = pd.read_csv(poses_path)
    missing = set(POSE_COLUMNS) - set(poses.columns)
    if missing:
        raise SequenceFormatError(f"{poses_path}: missing columns {sorted(missing)}")
    ts = poses["timestamp"].to_numpy(dtype=np.float64)
    if len(ts) > 1 and np.any(np.diff(ts) <= 0):
        raise SequenceFormatError(f"{poses_path}: timestamps must be strictly increasing")
    if not (root / DEPTH_DIR).is_dir():
        raise SequenceFormatError(f"missing {DEPTH_DIR}/ directory in {root}")
    truth = read_truth(root / TRUTH_FILE, ts) if (root / TRUTH_FILE).exists() else None
    logger.debug(f"Loaded sequence {root} with {len(poses)} frames")
    return RecordedSequence(root, intr, frame_rate, meta.get("name", root.name), poses, truth, meta)
