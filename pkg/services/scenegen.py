"""
Synthetic RGB-D ground-truth generator.

Ray-casts depth images of axis-aligned boxes and vertical cylinders moving along scripted
trajectories, and emits ground-truth boxes, velocities, class labels and visibility per frame.
Every frame is a pure function of (script, t, noise seed, frame index).

Recommended improvements:
- Add a floor plane primitive once ground removal is part of the detectors.
- Cache per-resolution pixel rays across frames when the camera does not rotate.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from core_utils import get_logger
from models.registry import registry
from services.geometry import pixel_rays, project_points


ShapeKind = registry.enums.ShapeKind
AABB3D = registry.AABB3D
Detection2D = registry.Detection2D
DepthImage = registry.DepthImage
GroundTruthFrame = registry.GroundTruthFrame
GroundTruthObject = registry.types.GroundTruthObject
Pose = registry.Pose

logger = get_logger(__name__)


@dataclass(frozen=True)
class RaycastResult:
    """Noiseless hit depth per pixel plus the index of the object that owns it (-1 = background)."""

    depth: np.ndarray
    owner: np.ndarray
    alone_counts: np.ndarray


def camera_pose(script, t: float):
    cam = script.camera
    yaw = np.radians(cam.yaw_deg + cam.yaw_rate_deg * t)
    return Pose.horizontal(cam.position.position_at(t), yaw)


def object_box(obj, t: float):
    return AABB3D(obj.trajectory.position_at(t), obj.dims)


def _world_rays(intr, pose) -> tuple[np.ndarray, np.ndarray]:
    vs, us = np.mgrid[0 : intr.height, 0 : intr.width].astype(np.float64)
    cam = pixel_rays(intr, us.ravel(), vs.ravel())
    # camera-frame z of each direction is 1, so the ray parameter is the camera depth
    return pose.translation, cam @ pose.rotation.T


def _hit_box(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
    parallel = dirs == 0
    inside = (origin >= lo) & (origin <= hi)
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    tmin = t_near.max(axis=1)
    tmax = t_far.min(axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def _hit_cylinder(
    origin: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float, height: float
) -> np.ndarray:
    z0, z1 = center[2] - height / 2.0, center[2] + height / 2.0
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    a = dx * dx + dy * dy
    b = 2.0 * (dx * ox + dy * oy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4.0 * a * c
    best = np.full(len(dirs), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.where(disc >= 0, disc, 0.0))) / (2.0 * a)
        z_side = origin[2] + t_side * dz
        side_ok = (a > 0) & (disc >= 0) & (t_side > 0) & (z_side >= z0) & (z_side <= z1)
        best = np.where(side_ok, t_side, best)
        for zc in (z0, z1):
            t_cap = (zc - origin[2]) / dz
            rx = ox + t_cap * dx
            ry = oy + t_cap * dy
            cap_ok = (dz != 0) & (t_cap > 0) & (rx * rx + ry * ry <= radius * radius)
            best = np.where(cap_ok & (t_cap < best), t_cap, best)
    return best


def raycast(script, t: float, intr) -> RaycastResult:
    pose = camera_pose(script, t)
    origin, dirs = _world_rays(intr, pose)
    n_pix = len(dirs)
    depth = np.full(n_pix, np.inf)
    owner = np.full(n_pix, -1, dtype=np.int64)
    alone = np.zeros(len(script.objects), dtype=np.int64)
    for k, obj in enumerate(script.objects):
        center = obj.trajectory.position_at(t)
        if obj.shape == ShapeKind.cylinder:
            hits = _hit_cylinder(origin, dirs, center, obj.dims[0] / 2.0, obj.dims[2])
        else:
            half = np.array(obj.dims) / 2.0
            hits = _hit_box(origin, dirs, center - half, center + half)
        in_range = (hits >= intr.depth_min) & (hits <= intr.depth_max)
        alone[k] = int(np.count_nonzero(in_range))
        closer = hits < depth
        depth = np.where(closer, hits, depth)
        owner = np.where(closer, k, owner)
    dark = np.array([obj.dark_at(t) for obj in script.objects], dtype=bool)
    if dark.any():
        # a dark object still hides whatever is behind it
        lost = (owner >= 0) & dark[np.maximum(owner, 0)]
        depth = np.where(lost, np.inf, depth)
        owner = np.where(lost, -1, owner)
    valid = np.isfinite(depth) & (depth >= intr.depth_min) & (depth <= intr.depth_max)
    owner = np.where(valid, owner, -1)
    depth = np.where(valid, depth, 0.0)
    shape = (intr.height, intr.width)
    return RaycastResult(depth.reshape(shape), owner.reshape(shape), alone)


def _blob_patches(noise, frame_index: int, intr) -> list[tuple[int, int, int, float]]:
    """Active blobs (u, v, half-size, depth) for a frame; a blob lives blob_lifetime_frames frames."""
    if noise.blob_probability <= 0:
        return []
    blobs = []
    lo_d = intr.depth_min + 0.2
    hi_d = min(intr.depth_max, 4.0)
    for spawn in range(max(0, frame_index - noise.blob_lifetime_frames + 1), frame_index + 1):
        rng = np.random.default_rng([noise.seed, spawn, 1])
        if rng.random() >= noise.blob_probability:
            continue
        size = int(rng.integers(noise.blob_min_px, noise.blob_max_px + 1))
        u = int(rng.integers(0, intr.width))
        v = int(rng.integers(0, intr.height))
        blobs.append((u, v, max(1, size // 2), float(rng.uniform(lo_d, max(lo_d, hi_d)))))
    return blobs


def apply_noise(meters: np.ndarray, noise, frame_index: int, intr) -> np.ndarray:
    out = meters.copy()
    valid = out > 0
    if noise.sigma_ratio > 0:
        rng = np.random.default_rng([noise.seed, frame_index])
        gauss = rng.standard_normal(out.shape)
        out = np.where(valid, out * (1.0 + noise.sigma_ratio * gauss), 0.0)
    for u, v, half, d in _blob_patches(noise, frame_index, intr):
        v0, v1 = max(0, v - half), min(intr.height, v + half + 1)
        u0, u1 = max(0, u - half), min(intr.width, u + half + 1)
        out[v0:v1, u0:u1] = d
    out[(out < intr.depth_min) | (out > intr.depth_max)] = 0.0
    return out


def to_raw(meters: np.ndarray, intr) -> np.ndarray:
    raw = np.rint(meters / intr.depth_scale)
    return np.clip(raw, 0, np.iinfo(np.uint16).max).astype(np.uint16)


def _frame_index(script, t: float, frame_index: Optional[int]) -> int:
    return int(round(t * script.frame_rate)) if frame_index is None else frame_index


def _check_time(script, t: float) -> None:
    if t < 0 or t > script.duration + 1e-9:
        raise ValueError(f"time {t} outside [0, {script.duration}]")


def ground_truth(script, t: float, intr, cast: Optional[RaycastResult] = None):
    cast = cast or raycast(script, t, intr)
    visible = np.bincount(cast.owner[cast.owner >= 0].ravel(), minlength=len(script.objects))
    objects = []
    for k, obj in enumerate(script.objects):
        alone = cast.alone_counts[k]
        objects.append(
            GroundTruthObject(
                object_id=k,
                label=obj.label,
                obstacle_class=obj.obstacle_class,
                box=object_box(obj, t),
                velocity=obj.trajectory.velocity_at(t),
                visibility=float(visible[k] / alone) if alone > 0 else 0.0,
            )
        )
    return GroundTruthFrame(timestamp=t, objects=tuple(objects))


def render_frame(script, t: float, intr, noise=None, frame_index: Optional[int] = None):
    """Depth image and ground truth at time t."""
    _check_time(script, t)
    noise = noise or registry.NoiseModel()
    idx = _frame_index(script, t, frame_index)
    cast = raycast(script, t, intr)
    meters = apply_noise(cast.depth, noise, idx, intr)
    depth = DepthImage(intr.width, intr.height, to_raw(meters, intr))
    return depth, ground_truth(script, t, intr, cast)


def render_detections2d(
    script,
    t: float,
    intr,
    jitter_px: float = 0.0,
    dropout: float = 0.0,
    seed: int = 0,
    frame_index: Optional[int] = None,
    cast: Optional[RaycastResult] = None,
) -> list:
    """Pixel-space boxes of visible objects, optionally jittered or dropped."""
    _check_time(script, t)
    cast = cast or raycast(script, t, intr)
    pose = camera_pose(script, t)
    rng = np.random.default_rng([seed, _frame_index(script, t, frame_index), 2])
    out = []
    for k, obj in enumerate(script.objects):
        mask = cast.owner == k
        visible_px = int(np.count_nonzero(mask))
        if visible_px == 0:
            continue
        cam_z = pose.inverse_transform(object_box(obj, t).corners())[:, 2]
        if visible_px >= cast.alone_counts[k] and np.all(cam_z > 0):
            uv, _, _ = project_points(object_box(obj, t).corners(), intr, pose)
            u0, u1 = float(uv[:, 0].min()), float(uv[:, 0].max())
            v0, v1 = float(uv[:, 1].min()), float(uv[:, 1].max())
        else:
            # occluded or cut by the image plane: box the pixels that are actually seen
            rows, cols = np.nonzero(mask)
            u0, u1, v0, v1 = float(cols.min()), float(cols.max()), float(rows.min()), float(rows.max())
        if dropout > 0 and rng.random() < dropout:
            continue
        if jitter_px > 0:
            du0, du1, dv0, dv1 = rng.normal(0.0, jitter_px, size=4)
            u0, u1 = sorted((u0 + du0, u1 + du1))
            v0, v1 = sorted((v0 + dv0, v1 + dv1))
        det = Detection2D(u0, u1, v0, v1, obj.label, 1.0).clipped(intr.width, intr.height)
        if det is not None:
            out.append(det)
    return out


def render_sequence(
    script, intr, noise=None, with_detections2d: bool = True, jitter_px: float = 0.0, dropout: float = 0.0
):
    """Yield (FrameRecord, GroundTruthFrame) for every frame of the script."""
    noise = noise or registry.NoiseModel()
    for idx in range(script.num_frames):
        t = script.frame_time(idx)
        cast = raycast(script, t, intr)
        meters = apply_noise(cast.depth, noise, idx, intr)
        depth = DepthImage(intr.width, intr.height, to_raw(meters, intr))
        dets = None
        if with_detections2d:
            dets = tuple(
                render_detections2d(script, t, intr, jitter_px, dropout, noise.seed, frame_index=idx, cast=cast)
            )
        frame = registry.FrameRecord(idx, t, depth, camera_pose(script, t), dets)
        yield frame, ground_truth(script, t, intr, cast)


def write_sequence(
    script,
    out_dir: str | Path,
    intr,
    noise=None,
    with_detections2d: bool = True,
    jitter_px: float = 0.0,
    dropout: float = 0.0,
) -> Path:
    """Render every frame and write the on-disk sequence format."""
    from services.sequence_io import SequenceWriter

    writer = SequenceWriter(out_dir, intr, script.frame_rate, name=script.name)
    for frame, truth in render_sequence(script, intr, noise, with_detections2d, jitter_px, dropout):
        writer.add(frame, truth)
    path = writer.close()
    logger.info(f"Wrote {script.num_frames} frames of '{script.name}' to {path}")
    return path
