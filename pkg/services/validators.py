"""
Cross-field validators for pipeline configs and scene scripts.

Recommended improvements:
- Add warnings (not just hard errors) for soft constraints (e.g., k_back longer than the track history).
- Check that scripted objects start inside the camera's depth range.
"""
from __future__ import annotations

from models.registry import registry


def validate_pipeline_config(cfg: registry.PipelineConfig) -> None:
    detectors = cfg.enabled_detectors
    if not detectors:
        raise ValueError("at least one detector must be enabled")
    if cfg.enable_ensemble and len(detectors) < 2:
        raise ValueError(f"ensemble requires >= 2 enabled detectors, got {detectors}")
    if cfg.identify.k_back >= cfg.tracker.history:
        raise ValueError("identify.k_back must be shorter than tracker.history")
    for name, max_range in (("udepth", cfg.udepth.max_range), ("dbscan", cfg.dbscan.max_range)):
        if max_range is not None and max_range <= cfg.intrinsics.depth_min:
            raise ValueError(f"{name}.max_range must exceed intrinsics.depth_min")


def validate_scene_script(script: registry.SceneScript) -> None:
    camera = script.camera.position.position_at(0.0)
    for i, obj in enumerate(script.objects):
        if obj.shape == registry.enums.ShapeKind.cylinder and obj.dims[0] != obj.dims[1]:
            raise ValueError(f"object {i}: cylinder dims must be [diameter, diameter, height]")
        box = registry.AABB3D(obj.trajectory.position_at(0.0), obj.dims)
        if box.contains(camera[None, :])[0]:
            raise ValueError(f"object {i} ('{obj.label}') contains the camera at t=0")
