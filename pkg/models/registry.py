"""
Centralized registry for accessing all models, enums, constants, and schemas.

This registry provides a single point of access to the perception domain components,
so services and the CLI import configs, value types and defaults from one place.
"""

from __future__ import annotations

from .enums import (
    AssociationMode,
    CameraDefaults,
    ClassSource,
    DbscanDefaults,
    DetectorName,
    EnsembleDefaults,
    EvalDefaults,
    IdentifyDefaults,
    MadDefaults,
    MotionModel,
    NoiseDefaults,
    ObstacleClass,
    PipelineStage,
    ShapeKind,
    TrackerDefaults,
    TrajectoryKind,
    UDepthDefaults,
    default_count_threshold,
    is_dynamic_label,
)
from .schemas import (
    CameraIntrinsics,
    CameraTrajectory,
    DbscanConfig,
    EnsembleConfig,
    EvalConfig,
    IdentifyConfig,
    MadConfig,
    NoiseModel,
    PipelineConfig,
    SceneObject,
    SceneScript,
    TrackerConfig,
    Trajectory,
    UDepthConfig,
)
from .types import (
    AABB3D,
    DepthImage,
    Detection,
    Detection2D,
    FrameRecord,
    GroundTruthFrame,
    GroundTruthObject,
    PointCloud,
    Pose,
    TrackOutput,
)


class EnumRegistry:
    """Registry for all enum classes and constants."""

    # Default constants
    CameraDefaults = CameraDefaults
    NoiseDefaults = NoiseDefaults
    UDepthDefaults = UDepthDefaults
    DbscanDefaults = DbscanDefaults
    MadDefaults = MadDefaults
    EnsembleDefaults = EnsembleDefaults
    TrackerDefaults = TrackerDefaults
    IdentifyDefaults = IdentifyDefaults
    EvalDefaults = EvalDefaults

    # Core enums
    ObstacleClass = ObstacleClass
    ShapeKind = ShapeKind
    TrajectoryKind = TrajectoryKind
    AssociationMode = AssociationMode
    MotionModel = MotionModel
    DetectorName = DetectorName
    ClassSource = ClassSource
    PipelineStage = PipelineStage


class TypeRegistry:
    """Registry for the immutable numeric value types."""

    Pose = Pose
    DepthImage = DepthImage
    PointCloud = PointCloud
    AABB3D = AABB3D
    Detection2D = Detection2D
    Detection = Detection
    FrameRecord = FrameRecord
    GroundTruthObject = GroundTruthObject
    GroundTruthFrame = GroundTruthFrame
    TrackOutput = TrackOutput


class SchemaRegistry:
    """Registry for all Pydantic schemas."""

    # Sensor and scene
    CameraIntrinsics = CameraIntrinsics
    NoiseModel = NoiseModel
    Trajectory = Trajectory
    CameraTrajectory = CameraTrajectory
    SceneObject = SceneObject
    SceneScript = SceneScript

    # Module configs
    UDepthConfig = UDepthConfig
    DbscanConfig = DbscanConfig
    MadConfig = MadConfig
    EnsembleConfig = EnsembleConfig
    TrackerConfig = TrackerConfig
    IdentifyConfig = IdentifyConfig
    EvalConfig = EvalConfig
    PipelineConfig = PipelineConfig


class UtilityRegistry:
    """Registry for utility functions and helpers."""

    default_count_threshold = staticmethod(default_count_threshold)
    is_dynamic_label = staticmethod(is_dynamic_label)


class Registry:
    """
    Main registry class that provides access to all domain components.

    This class consolidates all registries and provides convenient access
    to value types, schemas, enums, and utilities through a single interface.
    """

    def __init__(self):
        self.enums = EnumRegistry()
        self.types = TypeRegistry()
        self.schemas = SchemaRegistry()
        self.utils = UtilityRegistry()

    # Value types
    @property
    def Pose(self):
        return self.types.Pose

    @property
    def DepthImage(self):
        return self.types.DepthImage

    @property
    def PointCloud(self):
        return self.types.PointCloud

    @property
    def AABB3D(self):
        return self.types.AABB3D

    @property
    def Detection2D(self):
        return self.types.Detection2D

    @property
    def Detection(self):
        return self.types.Detection

    @property
    def FrameRecord(self):
        return self.types.FrameRecord

    @property
    def GroundTruthFrame(self):
        return self.types.GroundTruthFrame

    @property
    def TrackOutput(self):
        return self.types.TrackOutput

    # Schemas
    @property
    def CameraIntrinsics(self):
        return self.schemas.CameraIntrinsics

    @property
    def NoiseModel(self):
        return self.schemas.NoiseModel

    @property
    def SceneScript(self):
        return self.schemas.SceneScript

    @property
    def PipelineConfig(self):
        return self.schemas.PipelineConfig

    # Direct access to commonly used enums
    @property
    def ObstacleClass(self):
        return self.enums.ObstacleClass

    @property
    def AssociationMode(self):
        return self.enums.AssociationMode

    @property
    def MotionModel(self):
        return self.enums.MotionModel

    @property
    def PipelineStage(self):
        return self.enums.PipelineStage

    # Default constants
    @property
    def CameraDefaults(self):
        return self.enums.CameraDefaults

    @property
    def TrackerDefaults(self):
        return self.enums.TrackerDefaults

    @property
    def IdentifyDefaults(self):
        return self.enums.IdentifyDefaults


# Create a global registry instance
registry = Registry()

# Export the main components
__all__ = [
    "Registry",
    "registry",
    "EnumRegistry",
    "TypeRegistry",
    "SchemaRegistry",
    "UtilityRegistry",
]
