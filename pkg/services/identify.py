"""
Static/dynamic identification of confirmed tracks: center-velocity gate, per-point
nearest-neighbor voting across a k-frame gap, and a visibility filter that drops
points the earlier camera could not have seen.

Recommended improvements:
- Vote on the raw finite-difference center velocity as an alternative to the filtered estimate.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from core_utils import get_logger
from models.registry import registry
from services.geometry import project_points
from services.spatial_grid import SpatialHashGrid


logger = get_logger(__name__)

ObstacleClass = registry.ObstacleClass
ClassSource = registry.enums.ClassSource


@dataclass(frozen=True, eq=False)
class BufferedFrame:
    index: int
    timestamp: float
    meters: np.ndarray  # metric depth, 0 where invalid
    pose: object


class FrameBuffer:
    """Ring of the most recent frames' depth and pose for the visibility test."""

    def __init__(self, capacity: int):
        self._frames: deque[BufferedFrame] = deque(maxlen=max(1, capacity))

    def push(self, frame, intr) -> None:
        meters = frame.depth.to_meters(intr.depth_scale, intr.depth_min, intr.depth_max)
        self._frames.append(BufferedFrame(frame.index, frame.timestamp, meters, frame.pose))

    def get(self, index: int) -> Optional[BufferedFrame]:
        for f in self._frames:
            if f.index == index:
                return f
        return None

    def __len__(self) -> int:
        return len(self._frames)


@dataclass(frozen=True)
class VoteResult:
    n_vote: int
    n_valid: int
    n_points: int

    @property
    def ratio(self) -> float:
        return self.n_vote / self.n_valid if self.n_valid else 0.0


def velocity_gate(velocity, cfg) -> ObstacleClass:
    """STATIC when planar speed < t_vel; DYNAMIC means candidate for voting."""
    speed = float(np.linalg.norm(np.asarray(velocity, dtype=np.float64)[:2]))
    return ObstacleClass.static if speed < cfg.t_vel else ObstacleClass.dynamic


def visible_in(points: np.ndarray, past: BufferedFrame, intr, margin: float) -> np.ndarray:
    """Inside the past frustum and not behind a surface recorded more than margin nearer."""
    uv, z, visible = project_points(points, intr, past.pose)
    if not np.any(visible):
        return visible
    h, w = past.meters.shape
    u = np.clip(np.rint(uv[visible, 0]).astype(np.int64), 0, w - 1)
    v = np.clip(np.rint(uv[visible, 1]).astype(np.int64), 0, h - 1)
    recorded = past.meters[v, u]
    occluded = (recorded > 0) & (recorded < z[visible] - margin)
    out = visible.copy()
    out[np.nonzero(visible)[0][occluded]] = False
    return out


def point_votes(
    current,
    past,
    dt: float,
    v_center,
    cfg,
    past_frame: Optional[BufferedFrame] = None,
    intr=None,
) -> VoteResult:
    """(N_vote, N_valid) from nearest-neighbor displacement of current points against past points.

    Velocities are planar. Points above t_vote must point within 90 degrees of v_center to stay
    valid; slower points are valid static votes. With past_frame and intr, points outside the past
    view are dropped.
    """
    cur = current.points
    old = past.points
    if len(cur) == 0 or len(old) == 0 or dt <= 0:
        return VoteResult(0, 0, len(cur))
    cell = min(cfg.nn_radius, registry.enums.IdentifyDefaults.NN_CELL_SIZE)
    idx, _ = SpatialHashGrid(old, cell).nearest(cur, cfg.nn_radius)
    valid = idx >= 0
    v_vote = np.zeros((len(cur), 2))
    v_vote[valid] = (cur[valid, :2] - old[idx[valid], :2]) / dt
    speed = np.linalg.norm(v_vote, axis=1)
    fast = speed > cfg.t_vote
    aligned = v_vote @ np.asarray(v_center, dtype=np.float64)[:2] > 0
    valid &= ~fast | aligned
    if cfg.use_visibility_filter and past_frame is not None and intr is not None:
        valid &= visible_in(cur, past_frame, intr, cfg.occlusion_margin)
    return VoteResult(int(np.count_nonzero(valid & fast)), int(np.count_nonzero(valid)), len(cur))


def classify(track, votes: Optional[VoteResult], cfg) -> Optional[ObstacleClass]:
    """Per-frame decision before hysteresis; None when the track is not mature enough to vote."""
    if track.dynamic_override:
        return ObstacleClass.dynamic
    if velocity_gate(track.velocity, cfg) == ObstacleClass.static:
        return ObstacleClass.static
    if votes is None:
        return None
    if votes.n_valid < cfg.min_valid_points:
        return ObstacleClass.dynamic
    return ObstacleClass.dynamic if votes.ratio > cfg.t_ratio else ObstacleClass.static


def apply_label(track, decision: ObstacleClass, source: ClassSource, cfg) -> None:
    """Overrides, the first label and the first mature label apply at once.

    GATE labels are provisional (given before the track can vote); any other change needs
    class_hysteresis consecutive agreeing frames.
    """
    provisional = track.class_source in (ClassSource.pending, ClassSource.gate)
    if (
        source == ClassSource.override
        or track.obstacle_class == ObstacleClass.unknown
        or (provisional and source == ClassSource.votes)
    ):
        track.obstacle_class, track.class_source = decision, source
        track.pending_class, track.pending_count = None, 0
        return
    if decision == track.obstacle_class:
        track.pending_class, track.pending_count = None, 0
        return
    if decision == track.pending_class:
        track.pending_count += 1
    else:
        track.pending_class, track.pending_count = decision, 1
    if track.pending_count >= cfg.class_hysteresis:
        logger.debug(f"track {track.track_id}: {track.obstacle_class.value} -> {decision.value}")
        track.obstacle_class, track.class_source = decision, source
        track.pending_class, track.pending_count = None, 0


def lookback(track, frame_index: int, k_back: int) -> Optional[tuple]:
    """Latest (frame index, timestamp, cloud) at least k_back frames before frame_index."""
    for entry in reversed(track.cloud_history):
        if entry[0] <= frame_index - k_back:
            return entry
    return None


class Identifier:
    """Holds the frame ring and labels confirmed tracks once per frame."""

    def __init__(self, cfg=None, intr=None, capacity: Optional[int] = None):
        self.cfg = cfg or registry.schemas.IdentifyConfig()
        self.intr = intr or registry.CameraIntrinsics()
        # covers a track coasting through the default number of misses
        default_capacity = self.cfg.k_back + registry.TrackerDefaults.DEATH_MISSES + 1
        self.frames = FrameBuffer(capacity or default_capacity)

    def observe(self, frame) -> None:
        self.frames.push(frame, self.intr)

    def votes_for(self, track, frame_index: int) -> Optional[VoteResult]:
        if not track.cloud_history or track.cloud_history[-1][0] != frame_index:
            return None
        past = lookback(track, frame_index, self.cfg.k_back)
        if past is None:
            return None
        past_index, past_time, past_cloud = past
        _, now, cloud = track.cloud_history[-1]
        past_frame = self.frames.get(past_index)
        if self.cfg.use_visibility_filter and past_frame is None:
            return None
        return point_votes(cloud, past_cloud, now - past_time, track.velocity, self.cfg, past_frame, self.intr)

    def update(self, tracks: Iterable, frame_index: int) -> None:
        for track in tracks:
            if track.dynamic_override:
                apply_label(track, ObstacleClass.dynamic, ClassSource.override, self.cfg)
                continue
            gate = velocity_gate(track.velocity, self.cfg)
            votes = self.votes_for(track, frame_index) if gate == ObstacleClass.dynamic else None
            decision = classify(track, votes, self.cfg)
            if decision is None:
                continue
            mature = lookback(track, frame_index, self.cfg.k_back) is not None
            apply_label(track, decision, ClassSource.votes if mature else ClassSource.gate, self.cfg)
