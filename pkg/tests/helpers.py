from __future__ import annotations

import numpy as np

from models.registry import registry


def depth_from_meters(meters: np.ndarray):
    raw = np.rint(np.asarray(meters, dtype=np.float64) / registry.CameraDefaults.DEPTH_SCALE).astype(np.uint16)
    return registry.DepthImage.from_array(raw)


def cloud_grid(lo, hi, step: float):
    axes = [np.arange(a, b + step / 2.0, step) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return registry.PointCloud(pts)


def render(script, intr, noise=None, with_detections2d: bool = True):
    """(frames, truth) lists for a scene rendered in memory."""
    from services.scenegen import render_sequence

    pairs = list(render_sequence(script, intr, noise, with_detections2d))
    return [f for f, _ in pairs], [t for _, t in pairs]
