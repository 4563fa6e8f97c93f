"""
Feature-based association and constant-acceleration Kalman tracking.

State X = [x, y, vx, vy, ax, ay] in the world plane; z center and box dims are carried
outside the filter with exponential smoothing. The track store is single-writer: one
ObstacleTracker instance is stepped once per frame.

Recommended improvements:
- Optional optimal (Hungarian) assignment for dense crowds.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from core_utils import get_logger
from models.registry import registry


logger = get_logger(__name__)

AABB3D = registry.AABB3D
AssociationMode = registry.AssociationMode
MotionModel = registry.MotionModel
ObstacleClass = registry.ObstacleClass
ClassSource = registry.enums.ClassSource
TrackerDefaults = registry.TrackerDefaults


@dataclass(frozen=True, eq=False)
class FeatureVector:
    pos: np.ndarray
    dim: np.ndarray
    length: float
    std: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pos, self.dim, [self.length], self.std])

    def with_position(self, pos) -> "FeatureVector":
        return replace(self, pos=np.asarray(pos, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class KalmanState:
    x: np.ndarray  # (6,)
    P: np.ndarray  # (6, 6)

    @property
    def position(self) -> np.ndarray:
        return self.x[0:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:4]

    @property
    def acceleration(self) -> np.ndarray:
        return self.x[4:6]


@dataclass(eq=False)
class TrackedObstacle:
    track_id: int
    state: KalmanState
    feature: FeatureVector
    cloud: object
    z_center: float
    dims: np.ndarray
    history: int = TrackerDefaults.HISTORY
    hits: int = 1
    misses: int = 0
    confirmed: bool = False
    label: Optional[str] = None
    dynamic_override: bool = False
    obstacle_class: ObstacleClass = ObstacleClass.unknown
    class_source: ClassSource = ClassSource.pending
    pending_class: Optional[ObstacleClass] = None
    pending_count: int = 0
    observations: deque = field(default_factory=deque)  # (timestamp, center xy)
    box_history: deque = field(default_factory=deque)  # (timestamp, AABB3D)
    cloud_history: deque = field(default_factory=deque)  # (frame index, timestamp, PointCloud)

    def __post_init__(self) -> None:
        self.observations = deque(self.observations, maxlen=self.history)
        self.box_history = deque(self.box_history, maxlen=self.history)
        self.cloud_history = deque(self.cloud_history, maxlen=self.history)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.state.x[0], self.state.x[1], self.z_center])

    @property
    def velocity(self) -> np.ndarray:
        return self.state.velocity

    @property
    def box(self):
        return AABB3D(self.center, self.dims)

    def to_output(self, timestamp: float):
        return registry.TrackOutput(
            timestamp=float(timestamp),
            track_id=self.track_id,
            obstacle_class=self.obstacle_class,
            center=tuple(float(v) for v in self.center),
            dims=tuple(float(v) for v in self.dims),
            velocity=(float(self.state.x[2]), float(self.state.x[3])),
        )


# Features and association


def extract_feature(box, cloud) -> FeatureVector:
    pts = cloud.points
    std = pts.std(axis=0) if len(pts) else np.zeros(3)
    return FeatureVector(box.center.copy(), box.dims.copy(), float(len(pts)), std)


def blend_feature(old: FeatureVector, new: FeatureVector, alpha: float) -> FeatureVector:
    """Position from the new detection; dims, point count and spread smoothed so a surface
    that is revealed over several frames stays associated with its track."""
    return FeatureVector(
        new.pos,
        alpha * new.dim + (1.0 - alpha) * old.dim,
        alpha * new.length + (1.0 - alpha) * old.length,
        alpha * new.std + (1.0 - alpha) * old.std,
    )


def similarity(f1: FeatureVector, f2: FeatureVector, scales) -> float:
    """exp(-||(f1 - f2) / scales||^2)."""
    diff = (f1.as_array() - f2.as_array()) / np.asarray(scales, dtype=np.float64)
    return float(np.exp(-np.dot(diff, diff)))


def _similarity_matrix(track_feats: np.ndarray, det_feats: np.ndarray, cfg) -> np.ndarray:
    scales = cfg.feature_scales
    if cfg.association == AssociationMode.center_distance:
        track_feats, det_feats, scales = track_feats[:, :3], det_feats[:, :3], scales[:3]
    diff = (track_feats[:, None, :] - det_feats[None, :, :]) / scales
    return np.exp(-np.sum(diff * diff, axis=2))


@dataclass
class Association:
    matches: list[tuple[int, int, float]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(tracks: Sequence[TrackedObstacle], detections: Sequence, cfg) -> Association:
    """Greedy descending-similarity matching against KF-predicted track positions.

    A pair needs similarity > similarity_threshold; each track and each detection is used once.
    """
    if not tracks or not detections:
        return Association([], list(range(len(tracks))), list(range(len(detections))))
    t_feats = np.stack([t.feature.with_position(t.center).as_array() for t in tracks])
    d_feats = np.stack([extract_feature(d.box, d.cloud).as_array() for d in detections])
    sim = _similarity_matrix(t_feats, d_feats, cfg)
    ti, di = np.nonzero(sim > cfg.similarity_threshold)
    order = np.lexsort((di, ti, -sim[ti, di]))
    used_t, used_d, matches = set(), set(), []
    for k in order:
        a, b = int(ti[k]), int(di[k])
        if a in used_t or b in used_d:
            continue
        used_t.add(a)
        used_d.add(b)
        matches.append((a, b, float(sim[a, b])))
    return Association(
        matches,
        [i for i in range(len(tracks)) if i not in used_t],
        [j for j in range(len(detections)) if j not in used_d],
    )


# Kinematics and Kalman filter


def measure_kinematics(observations: Sequence[tuple[float, np.ndarray]], k_v: int) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and acceleration by finite differences over k_v-entry spans; zero when history is short."""
    n = len(observations)
    vel = np.zeros(2)
    acc = np.zeros(2)
    if n < k_v + 1:
        return vel, acc
    t = np.array([observations[i][0] for i in (-1, -1 - k_v)])
    p = np.array([observations[i][1] for i in (-1, -1 - k_v)], dtype=np.float64)
    vel = (p[0] - p[1]) / (t[0] - t[1])
    if n >= 2 * k_v + 1:
        t_prev, p_prev = observations[-1 - 2 * k_v]
        vel_prev = (p[1] - np.asarray(p_prev, dtype=np.float64)) / (t[1] - t_prev)
        # the two velocities sit at the midpoints of their spans
        acc = (vel - vel_prev) / ((t[0] - t_prev) / 2.0)
    return vel, acc


def transition_matrix(dt: float, motion_model: MotionModel = MotionModel.constant_acceleration) -> np.ndarray:
    A = np.eye(6)
    A[0, 2] = A[1, 3] = dt
    if motion_model == MotionModel.constant_acceleration:
        A[0, 4] = A[1, 5] = 0.5 * dt * dt
        A[2, 4] = A[3, 5] = dt
    else:
        A[4, 4] = A[5, 5] = 0.0
    return A


def kf_predict(state: KalmanState, cfg, dt: Optional[float] = None) -> KalmanState:
    A = transition_matrix(cfg.dt if dt is None else dt, cfg.motion_model)
    P = A @ state.P @ A.T + cfg.Q
    return KalmanState(A @ state.x, 0.5 * (P + P.T))


def kf_update(state: KalmanState, z, cfg) -> KalmanState:
    """Kalman update with H = I: K = P (P + R)^-1."""
    z = np.asarray(z, dtype=np.float64)
    S = state.P + cfg.R
    try:
        K = np.linalg.solve(S.T, state.P.T).T
    except np.linalg.LinAlgError:
        S = S + TrackerDefaults.REGULARIZATION_EPS * np.eye(6)
        K = np.linalg.solve(S.T, state.P.T).T
    x = state.x + K @ (z - state.x)
    P = (np.eye(6) - K) @ state.P
    return KalmanState(x, 0.5 * (P + P.T))


# Track store


class ObstacleTracker:
    """Owns the track list and the id counter; step() once per frame."""

    def __init__(self, cfg=None):
        self.cfg = cfg or registry.schemas.TrackerConfig()
        self.tracks: list[TrackedObstacle] = []
        self._next_id = 1
        self._last_time: Optional[float] = None

    def _spawn(self, det, timestamp: float, frame_index: int) -> TrackedObstacle:
        cfg = self.cfg
        x = np.zeros(6)
        x[0:2] = det.box.center[0:2]
        track = TrackedObstacle(
            track_id=self._next_id,
            state=KalmanState(x, cfg.R.copy()),
            feature=extract_feature(det.box, det.cloud),
            cloud=det.cloud,
            z_center=float(det.box.center[2]),
            dims=det.box.dims.copy(),
            history=cfg.history,
            confirmed=cfg.birth_hits <= 1,
        )
        self._next_id += 1
        self._record(track, det, timestamp, frame_index)
        return track

    def _record(self, track: TrackedObstacle, det, timestamp: float, frame_index: int) -> None:
        track.observations.append((timestamp, det.box.center[0:2].copy()))
        track.box_history.append((timestamp, det.box))
        track.cloud_history.append((frame_index, timestamp, det.cloud))
        if det.label is not None:
            track.label = det.label
        # the override lasts only while the class detector keeps labelling this track
        track.dynamic_override = det.dynamic_override

    def _update(self, track: TrackedObstacle, det, timestamp: float, frame_index: int) -> None:
        cfg = self.cfg
        self._record(track, det, timestamp, frame_index)
        vel, acc = measure_kinematics(track.observations, cfg.k_v)
        if cfg.motion_model == MotionModel.constant_velocity:
            acc = np.zeros(2)
        z = np.concatenate([det.box.center[0:2], vel, acc])
        track.state = kf_update(track.state, z, cfg)
        alpha = cfg.vertical_alpha
        track.z_center = alpha * float(det.box.center[2]) + (1.0 - alpha) * track.z_center
        track.dims = alpha * det.box.dims + (1.0 - alpha) * track.dims
        track.feature = blend_feature(track.feature, extract_feature(det.box, det.cloud), cfg.feature_alpha)
        track.cloud = det.cloud
        track.hits += 1
        track.misses = 0
        if not track.confirmed and track.hits >= cfg.birth_hits:
            track.confirmed = True
            logger.debug(f"track {track.track_id} confirmed")

    def step(self, detections: Sequence, timestamp: float, frame_index: int = 0) -> list[TrackedObstacle]:
        """Predict, associate, update, and manage the lifecycle; returns confirmed tracks."""
        cfg = self.cfg
        dt = cfg.dt if self._last_time is None else timestamp - self._last_time
        if dt <= 0:
            dt = cfg.dt
        for track in self.tracks:
            track.state = kf_predict(track.state, cfg, dt)

        assoc = associate(self.tracks, detections, cfg)
        for ti, di, _ in assoc.matches:
            self._update(self.tracks[ti], detections[di], timestamp, frame_index)

        survivors = []
        unmatched = set(assoc.unmatched_tracks)
        for i, track in enumerate(self.tracks):
            if i in unmatched:
                track.misses += 1
                if not track.confirmed or track.misses >= cfg.death_misses:
                    logger.debug(f"track {track.track_id} removed after {track.misses} misses")
                    continue
            survivors.append(track)
        for j in assoc.unmatched_detections:
            survivors.append(self._spawn(detections[j], timestamp, frame_index))
        self.tracks = survivors
        self._last_time = timestamp
        return self.confirmed_tracks()

    def confirmed_tracks(self) -> list[TrackedObstacle]:
        return [t for t in self.tracks if t.confirmed]


def step_tracks(tracker: ObstacleTracker, detections: Sequence, timestamp: float, frame_index: int = 0) -> list:
    """Advance a tracker by one frame."""
    return tracker.step(detections, timestamp, frame_index)
