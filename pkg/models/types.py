"""
Immutable numeric value types shared by every detector, the tracker and the evaluator.

Arrays are copied on construction and marked read-only, so instances are safe to share
across detector threads within a frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .enums import ObstacleClass


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return _frozen(arr)


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world rigid transform."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        t = _vec3(self.translation, "translation")
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", _frozen(r))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.eye(3))

    @classmethod
    def horizontal(cls, translation, yaw: float = 0.0) -> "Pose":
        """Camera with optical axis along world yaw in a z-up world (x right, y down, z forward)."""
        c, s = np.cos(yaw), np.sin(yaw)
        forward = np.array([c, s, 0.0])
        right = np.array([s, -c, 0.0])
        down = np.array([0.0, 0.0, -1.0])
        return cls(translation, np.column_stack([right, down, forward]))

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Camera-frame points (N,3) to world frame."""
        return points @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """World-frame points (N,3) to camera frame."""
        return (points - self.translation) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply other first, then self."""
        return Pose(self.rotation @ other.translation + self.translation, self.rotation @ other.rotation)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Raw 16-bit depth, row-major (height, width); zero marks an invalid pixel."""

    width: int
    height: int
    data: np.ndarray
    _meters: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.size != self.width * self.height:
            raise ValueError(f"depth data has {arr.size} values, expected {self.width}x{self.height}")
        arr = np.array(arr, dtype=np.uint16).reshape(self.height, self.width)
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_array(cls, data: np.ndarray) -> "DepthImage":
        h, w = np.asarray(data).shape
        return cls(w, h, data)

    @classmethod
    def blank(cls, width: int, height: int) -> "DepthImage":
        return cls(width, height, np.zeros((height, width), dtype=np.uint16))

    def to_meters(self, depth_scale: float, depth_min: float, depth_max: float) -> np.ndarray:
        """Metric depth (float64, read-only) with out-of-range and invalid pixels set to 0.

        Memoized per (scale, min, max): every detector of a frame shares one conversion.
        """
        key = (float(depth_scale), float(depth_min), float(depth_max))
        cached = self._meters.get(key)
        if cached is not None:
            return cached
        meters = self.data.astype(np.float64) * depth_scale
        meters[(self.data == 0) | (meters < depth_min) | (meters > depth_max)] = 0.0
        self._meters[key] = _frozen(meters)
        return meters


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud coordinates must be finite")
        object.__setattr__(self, "points", _frozen(arr))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass(frozen=True, eq=False)
class AABB3D:
    center: np.ndarray
    dims: np.ndarray

    def __post_init__(self) -> None:
        c = _vec3(self.center, "center")
        d = _vec3(self.dims, "dims")
        if np.any(d <= 0):
            raise ValueError(f"box dims must be strictly positive, got {d.tolist()}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "dims", d)

    @classmethod
    def from_bounds(cls, lo, hi, min_dim: float = 1e-3) -> "AABB3D":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        return cls((lo + hi) / 2.0, np.maximum(hi - lo, min_dim))

    @classmethod
    def from_points(cls, points: np.ndarray, min_dim: float = 1e-3) -> "AABB3D":
        return cls.from_bounds(points.min(axis=0), points.max(axis=0), min_dim=min_dim)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.dims / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.dims / 2.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.dims))

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def contains(self, points: np.ndarray, margin: float = 1e-9) -> np.ndarray:
        return np.all((points >= self.lo - margin) & (points <= self.hi + margin), axis=1)


@dataclass(frozen=True)
class Detection2D:
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    class_label: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.u_max < self.u_min or self.v_max < self.v_min:
            raise ValueError("2D box must satisfy u_min <= u_max and v_min <= v_max")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def clipped(self, width: int, height: int) -> Optional["Detection2D"]:
        u0, u1 = max(0.0, self.u_min), min(width - 1.0, self.u_max)
        v0, v1 = max(0.0, self.v_min), min(height - 1.0, self.v_max)
        if u1 < u0 or v1 < v0:
            return None
        return Detection2D(u0, u1, v0, v1, self.class_label, self.confidence)


@dataclass(frozen=True, eq=False)
class Detection:
    """A fused 3D detection handed to the tracker: box, its points and an optional semantic label."""

    box: AABB3D
    cloud: PointCloud
    label: Optional[str] = None
    dynamic_override: bool = False


@dataclass(frozen=True, eq=False)
class FrameRecord:
    index: int
    timestamp: float
    depth: DepthImage
    pose: Pose
    detections2d: Optional[tuple[Detection2D, ...]] = None


@dataclass(frozen=True, eq=False)
class GroundTruthObject:
    object_id: int
    label: str
    obstacle_class: ObstacleClass
    box: AABB3D
    velocity: np.ndarray
    visibility: float


@dataclass(frozen=True, eq=False)
class GroundTruthFrame:
    timestamp: float
    objects: tuple[GroundTruthObject, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class TrackOutput:
    """One output row per (frame, confirmed track)."""

    timestamp: float
    track_id: int
    obstacle_class: ObstacleClass
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    velocity: tuple[float, float]

    @property
    def box(self) -> AABB3D:
        return AABB3D(self.center, self.dims)
