"""
Domain enums and named defaults for the obstacle detection and tracking pipeline.

Notes:
- Project convention: All enum values should always be UPPER CASE.
- Centralized constants are the single source of truth for schemas and services.

Recommended improvements:
- Load sensor-specific default bundles (e.g. per camera model) from cli_templates.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


@dataclass(frozen=True)
class CameraDefaults:
    WIDTH: int = 640
    HEIGHT: int = 480
    FX: float = 385.0
    FY: float = 385.0
    CX: float = 320.0
    CY: float = 240.0
    DEPTH_SCALE: float = 0.001
    DEPTH_MIN: float = 0.3
    DEPTH_MAX: float = 10.0
    TRIANGULATION_STRIDE: int = 2
    MAX_HIDDEN_DEPTH: float = 1.0


@dataclass(frozen=True)
class NoiseDefaults:
    DEPTH_SIGMA_RATIO: float = 0.01
    BLOB_PROBABILITY: float = 0.0
    BLOB_MIN_PX: int = 6
    BLOB_MAX_PX: int = 18
    BLOB_LIFETIME_FRAMES: int = 1


@dataclass(frozen=True)
class UDepthDefaults:
    BIN_SIZE: float = 0.1
    COUNT_THRESHOLD_MIN: int = 4
    COUNT_THRESHOLD_RATIO: float = 0.02
    MIN_WIDTH: int = 4
    MIN_PIXELS_PER_ROW: int = 2
    ROW_FILL_RATIO: float = 0.1
    DEPTH_PERCENTILES: tuple[float, float] = (2.0, 98.0)


@dataclass(frozen=True)
class DbscanDefaults:
    VOXEL_SIZE: float = 0.1
    EPS: float = 0.3
    MIN_PTS: int = 4
    MIN_CLUSTER_SIZE: int = 15
    MIN_VOXEL_POINTS: int = 2


@dataclass(frozen=True)
class MadDefaults:
    N: float = 1.5
    MIN_THICKNESS: float = 0.1
    PIXEL_STEP: int = 2
    DYNAMIC_CLASSES: tuple[str, ...] = ("person",)


@dataclass(frozen=True)
class EnsembleDefaults:
    IOU_THRESHOLD: float = 0.25


@dataclass(frozen=True)
class TrackerDefaults:
    SIMILARITY_THRESHOLD: float = 0.3
    POS_SCALE: float = 1.0
    DIM_SCALE: float = 1.0
    LEN_SCALE: float = 100.0
    STD_SCALE: float = 1.0
    DT: float = 1.0 / 30.0
    KV: int = 3
    Q_DIAG: tuple[float, ...] = (0.01, 0.01, 0.05, 0.05, 0.1, 0.1)
    R_DIAG: tuple[float, ...] = (0.05, 0.05, 0.2, 0.2, 0.5, 0.5)
    BIRTH_HITS: int = 3
    DEATH_MISSES: int = 5
    HISTORY: int = 90
    VERTICAL_ALPHA: float = 0.5
    FEATURE_ALPHA: float = 0.5
    REGULARIZATION_EPS: float = 1e-9


@dataclass(frozen=True)
class IdentifyDefaults:
    T_VEL: float = 0.3
    T_VOTE: float = 0.3
    T_RATIO: float = 0.5
    K_BACK: int = 5
    MIN_VALID_POINTS: int = 10
    CLASS_HYSTERESIS: int = 3
    NN_RADIUS: float = 1.0
    # grid resolution for the nearest-neighbor search; finer than NN_RADIUS keeps candidate sets small
    NN_CELL_SIZE: float = 0.25
    OCCLUSION_MARGIN: float = 0.1


@dataclass(frozen=True)
class EvalDefaults:
    MATCH_IOU: float = 0.1
    # median per-frame compute target at 640x480 with five objects
    FRAME_BUDGET_MS: float = 16.0


class ObstacleClass(str, Enum):
    static = "STATIC"
    dynamic = "DYNAMIC"
    unknown = "UNKNOWN"


class ShapeKind(str, Enum):
    box = "BOX"
    cylinder = "CYLINDER"


class TrajectoryKind(str, Enum):
    static = "STATIC"
    linear = "LINEAR"
    waypoints = "WAYPOINTS"


class AssociationMode(str, Enum):
    feature = "FEATURE"
    center_distance = "CENTER_DISTANCE"


class MotionModel(str, Enum):
    constant_acceleration = "CONSTANT_ACCELERATION"
    constant_velocity = "CONSTANT_VELOCITY"


class DetectorName(str, Enum):
    udepth = "UDEPTH"
    dbscan = "DBSCAN"
    madlift = "MADLIFT"


class ClassSource(str, Enum):
    gate = "GATE"
    votes = "VOTES"
    override = "OVERRIDE"
    pending = "PENDING"


class PipelineStage(str, Enum):
    triangulate = "TRIANGULATE"
    udepth = "UDEPTH"
    dbscan = "DBSCAN"
    madlift = "MADLIFT"
    ensemble = "ENSEMBLE"
    tracking = "TRACKING"
    identify = "IDENTIFY"
    total = "TOTAL"


# Validation helpers
def default_count_threshold(image_height: int) -> int:
    return max(UDepthDefaults.COUNT_THRESHOLD_MIN, int(round(UDepthDefaults.COUNT_THRESHOLD_RATIO * image_height)))


def is_dynamic_label(label: str | None, dynamic_classes: tuple[str, ...] | frozenset[str]) -> bool:
    return label is not None and label.lower() in {c.lower() for c in dynamic_classes}
