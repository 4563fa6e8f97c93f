"""
Pydantic schemas for camera intrinsics, per-module configs, scene scripts and the pipeline config.

Recommended improvements:
- Version the scene-script schema once trajectories gain rotation for objects.
- Add JSON-schema export for editor completion of YAML configs.
"""
from __future__ import annotations

from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, conint

from .enums import (
    AssociationMode,
    CameraDefaults,
    DbscanDefaults,
    EnsembleDefaults,
    EvalDefaults,
    IdentifyDefaults,
    MadDefaults,
    MotionModel,
    NoiseDefaults,
    ObstacleClass,
    ShapeKind,
    TrackerDefaults,
    TrajectoryKind,
    UDepthDefaults,
)


class CameraIntrinsics(BaseModel):
    model_config = ConfigDict(frozen=True)

    fx: float = Field(default=CameraDefaults.FX, gt=0)
    fy: float = Field(default=CameraDefaults.FY, gt=0)
    cx: float = CameraDefaults.CX
    cy: float = CameraDefaults.CY
    width: conint(gt=0) = CameraDefaults.WIDTH  # type: ignore
    height: conint(gt=0) = CameraDefaults.HEIGHT  # type: ignore
    depth_scale: float = Field(default=CameraDefaults.DEPTH_SCALE, gt=0)
    depth_min: float = Field(default=CameraDefaults.DEPTH_MIN, ge=0)
    depth_max: float = CameraDefaults.DEPTH_MAX

    def model_post_init(self, __context: Any) -> None:
        if not 0 <= self.cx < self.width:
            raise ValueError(f"cx {self.cx} outside [0, {self.width})")
        if not 0 <= self.cy < self.height:
            raise ValueError(f"cy {self.cy} outside [0, {self.height})")
        if self.depth_min >= self.depth_max:
            raise ValueError("depth_min must be < depth_max")

    @classmethod
    def scaled(cls, width: int, height: int, **kwargs: Any) -> "CameraIntrinsics":
        """Intrinsics with the default field of view at a different resolution."""
        factor = width / CameraDefaults.WIDTH
        return cls(
            fx=CameraDefaults.FX * factor,
            fy=CameraDefaults.FY * factor,
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
            **kwargs,
        )


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_ratio: float = Field(default=0.0, ge=0)
    blob_probability: float = Field(default=NoiseDefaults.BLOB_PROBABILITY, ge=0, le=1)
    blob_min_px: conint(ge=1) = NoiseDefaults.BLOB_MIN_PX  # type: ignore
    blob_max_px: conint(ge=1) = NoiseDefaults.BLOB_MAX_PX  # type: ignore
    blob_lifetime_frames: conint(ge=1) = NoiseDefaults.BLOB_LIFETIME_FRAMES  # type: ignore
    seed: int = 0

    @classmethod
    def noisy(cls, seed: int = 0, blob_probability: float = 0.3) -> "NoiseModel":
        return cls(sigma_ratio=NoiseDefaults.DEPTH_SIGMA_RATIO, blob_probability=blob_probability, seed=seed)


class Trajectory(BaseModel):
    """Time-parameterized position; velocity is the analytic derivative."""

    model_config = ConfigDict(frozen=True)

    kind: TrajectoryKind = TrajectoryKind.static
    position: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    velocity: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    acceleration: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    # waypoints: [[t, x, y, z], ...] with strictly increasing t
    waypoints: List[List[float]] = Field(default_factory=list)

    def model_post_init(self, __context: Any) -> None:
        for name in ("position", "velocity", "acceleration"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"trajectory {name} must have 3 components")
        if self.kind == TrajectoryKind.waypoints:
            if len(self.waypoints) < 2:
                raise ValueError("waypoint trajectory needs at least 2 waypoints")
            times = [w[0] for w in self.waypoints]
            if any(len(w) != 4 for w in self.waypoints) or any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("waypoints must be [t, x, y, z] with strictly increasing t")

    def position_at(self, t: float) -> np.ndarray:
        if self.kind == TrajectoryKind.static:
            return np.array(self.position, dtype=np.float64)
        if self.kind == TrajectoryKind.linear:
            p0, v, a = (np.array(x, dtype=np.float64) for x in (self.position, self.velocity, self.acceleration))
            return p0 + v * t + 0.5 * a * t * t
        wp = np.array(self.waypoints, dtype=np.float64)
        return np.array([np.interp(t, wp[:, 0], wp[:, k]) for k in (1, 2, 3)])

    def velocity_at(self, t: float) -> np.ndarray:
        if self.kind == TrajectoryKind.static:
            return np.zeros(3)
        if self.kind == TrajectoryKind.linear:
            return np.array(self.velocity, dtype=np.float64) + np.array(self.acceleration, dtype=np.float64) * t
        wp = np.array(self.waypoints, dtype=np.float64)
        if t < wp[0, 0] or t >= wp[-1, 0]:
            return np.zeros(3)
        seg = int(np.searchsorted(wp[:, 0], t, side="right")) - 1
        return (wp[seg + 1, 1:] - wp[seg, 1:]) / (wp[seg + 1, 0] - wp[seg, 0])


class CameraTrajectory(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: Trajectory = Field(default_factory=lambda: Trajectory(position=[0.0, 0.0, 1.0]))
    yaw_deg: float = 0.0
    yaw_rate_deg: float = 0.0


class SceneObject(BaseModel):
    model_config = ConfigDict(frozen=True)

    shape: ShapeKind = ShapeKind.box
    # box: [dx, dy, dz]; cylinder: [diameter, diameter, height]
    dims: List[float]
    trajectory: Trajectory = Field(default_factory=Trajectory)
    obstacle_class: ObstacleClass = ObstacleClass.static
    label: str = "box"
    # [[t0, t1], ...] closed intervals in which the sensor gets no return from the object
    # (its pixels read as invalid depth and it yields no 2D box)
    dropouts: List[List[float]] = Field(default_factory=list)

    def model_post_init(self, __context: Any) -> None:
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise ValueError("object dims must be 3 strictly positive values")
        if self.obstacle_class == ObstacleClass.static and self.trajectory.kind != TrajectoryKind.static:
            raise ValueError("static objects must use a static trajectory")
        if self.obstacle_class == ObstacleClass.unknown:
            raise ValueError("scene objects must be STATIC or DYNAMIC")
        if any(len(w) != 2 or w[1] < w[0] for w in self.dropouts):
            raise ValueError("dropouts must be [t0, t1] intervals with t0 <= t1")

    def dark_at(self, t: float) -> bool:
        return any(t0 <= t <= t1 for t0, t1 in self.dropouts)


class SceneScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "scene"
    duration: float = Field(gt=0)
    frame_rate: float = Field(default=30.0, gt=0)
    camera: CameraTrajectory = Field(default_factory=CameraTrajectory)
    objects: List[SceneObject] = Field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return int(np.floor(self.duration * self.frame_rate + 1e-9)) + 1

    def frame_time(self, index: int) -> float:
        return index / self.frame_rate


class UDepthConfig(BaseModel):
    bin_size: float = Field(default=UDepthDefaults.BIN_SIZE, gt=0)
    # None -> max(4, 2% of image height)
    count_threshold: Optional[conint(ge=1)] = None  # type: ignore
    min_width: conint(ge=1) = UDepthDefaults.MIN_WIDTH  # type: ignore
    min_pixels_per_row: conint(ge=1) = UDepthDefaults.MIN_PIXELS_PER_ROW  # type: ignore
    row_fill_ratio: float = Field(default=UDepthDefaults.ROW_FILL_RATIO, ge=0, le=1)
    complete_hidden_depth: bool = True
    max_hidden_depth: float = Field(default=CameraDefaults.MAX_HIDDEN_DEPTH, gt=0)
    max_range: Optional[float] = Field(default=None, gt=0)
    # lower/upper percentile of matched pixel depths that bound the lifted box along the view axis
    depth_percentiles: List[float] = Field(default_factory=lambda: list(UDepthDefaults.DEPTH_PERCENTILES))

    def model_post_init(self, __context: Any) -> None:
        lo_hi = self.depth_percentiles
        if len(lo_hi) != 2 or not 0 <= lo_hi[0] < lo_hi[1] <= 100:
            raise ValueError(f"depth_percentiles must be [lo, hi] with 0 <= lo < hi <= 100, got {lo_hi}")


class DbscanConfig(BaseModel):
    voxel_size: float = Field(default=DbscanDefaults.VOXEL_SIZE, gt=0)
    eps: float = Field(default=DbscanDefaults.EPS, gt=0)
    min_pts: conint(ge=1) = DbscanDefaults.MIN_PTS  # type: ignore
    min_cluster_size: conint(ge=1) = DbscanDefaults.MIN_CLUSTER_SIZE  # type: ignore
    min_voxel_points: conint(ge=1) = DbscanDefaults.MIN_VOXEL_POINTS  # type: ignore
    stride: conint(ge=1) = CameraDefaults.TRIANGULATION_STRIDE  # type: ignore
    max_range: Optional[float] = Field(default=None, gt=0)


class MadConfig(BaseModel):
    n: float = Field(default=MadDefaults.N, gt=0)
    dynamic_classes: List[str] = Field(default_factory=lambda: list(MadDefaults.DYNAMIC_CLASSES))
    min_thickness: float = Field(default=MadDefaults.MIN_THICKNESS, gt=0)
    pixel_step: conint(ge=1) = MadDefaults.PIXEL_STEP  # type: ignore


class EnsembleConfig(BaseModel):
    iou_threshold: float = Field(default=EnsembleDefaults.IOU_THRESHOLD, gt=0, lt=1)


def _psd_diag(values: List[float], name: str) -> None:
    if len(values) != 6 or any(v < 0 for v in values):
        raise ValueError(f"{name} must be 6 non-negative diagonal entries")


class TrackerConfig(BaseModel):
    similarity_threshold: float = Field(default=TrackerDefaults.SIMILARITY_THRESHOLD, gt=0, lt=1)
    pos_scale: float = Field(default=TrackerDefaults.POS_SCALE, gt=0)
    dim_scale: float = Field(default=TrackerDefaults.DIM_SCALE, gt=0)
    len_scale: float = Field(default=TrackerDefaults.LEN_SCALE, gt=0)
    std_scale: float = Field(default=TrackerDefaults.STD_SCALE, gt=0)
    dt: float = Field(default=TrackerDefaults.DT, gt=0)
    k_v: conint(ge=1) = TrackerDefaults.KV  # type: ignore
    q_diag: List[float] = Field(default_factory=lambda: list(TrackerDefaults.Q_DIAG))
    r_diag: List[float] = Field(default_factory=lambda: list(TrackerDefaults.R_DIAG))
    birth_hits: conint(ge=1) = TrackerDefaults.BIRTH_HITS  # type: ignore
    death_misses: conint(ge=1) = TrackerDefaults.DEATH_MISSES  # type: ignore
    history: conint(ge=1) = TrackerDefaults.HISTORY  # type: ignore
    vertical_alpha: float = Field(default=TrackerDefaults.VERTICAL_ALPHA, gt=0, le=1)
    # weight of the newest detection in the smoothed dim/length/std part of the track feature
    feature_alpha: float = Field(default=TrackerDefaults.FEATURE_ALPHA, gt=0, le=1)
    association: AssociationMode = AssociationMode.feature
    motion_model: MotionModel = MotionModel.constant_acceleration

    def model_post_init(self, __context: Any) -> None:
        _psd_diag(self.q_diag, "q_diag")
        _psd_diag(self.r_diag, "r_diag")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.array(self.q_diag, dtype=np.float64))

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.array(self.r_diag, dtype=np.float64))

    @property
    def feature_scales(self) -> np.ndarray:
        return np.array([self.pos_scale] * 3 + [self.dim_scale] * 3 + [self.len_scale] + [self.std_scale] * 3)


class IdentifyConfig(BaseModel):
    t_vel: float = Field(default=IdentifyDefaults.T_VEL, gt=0)
    t_vote: float = Field(default=IdentifyDefaults.T_VOTE, gt=0)
    t_ratio: float = Field(default=IdentifyDefaults.T_RATIO, gt=0, lt=1)
    k_back: conint(ge=1) = IdentifyDefaults.K_BACK  # type: ignore
    min_valid_points: conint(ge=1) = IdentifyDefaults.MIN_VALID_POINTS  # type: ignore
    class_hysteresis: conint(ge=1) = IdentifyDefaults.CLASS_HYSTERESIS  # type: ignore
    nn_radius: float = Field(default=IdentifyDefaults.NN_RADIUS, gt=0)
    occlusion_margin: float = Field(default=IdentifyDefaults.OCCLUSION_MARGIN, ge=0)
    use_visibility_filter: bool = True


class EvalConfig(BaseModel):
    match_iou: float = Field(default=EvalDefaults.MATCH_IOU, gt=0, le=1)


class PipelineConfig(BaseModel):
    intrinsics: CameraIntrinsics = Field(default_factory=CameraIntrinsics)
    udepth: UDepthConfig = Field(default_factory=UDepthConfig)
    dbscan: DbscanConfig = Field(default_factory=DbscanConfig)
    madlift: MadConfig = Field(default_factory=MadConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    identify: IdentifyConfig = Field(default_factory=IdentifyConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    enable_udepth: bool = True
    enable_dbscan: bool = True
    enable_madlift: bool = True
    enable_ensemble: bool = True
    parallel_detectors: bool = False
    timing: bool = True
    output_dir: Optional[str] = None

    @property
    def enabled_detectors(self) -> list[str]:
        flags = [("UDEPTH", self.enable_udepth), ("DBSCAN", self.enable_dbscan), ("MADLIFT", self.enable_madlift)]
        return [name for name, on in flags if on]
