"""
Scene presets: scripted synthetic scenes for tests, ablations and benchmarks.

Camera convention: horizontal camera at 1 m height looking along world +x unless stated;
image right is world -y at yaw 0. Cylinders are people (diameter, diameter, height).

Recommended improvements:
- Load presets by name from cli_templates/scenes so YAML and code presets share one list.
- Add crowd scenes with crossing walkers for association stress tests.
"""
from __future__ import annotations

from typing import Any, Callable, Optional

import numpy as np

from models.registry import registry


schemas = registry.schemas
ObstacleClass = registry.ObstacleClass
ShapeKind = registry.enums.ShapeKind
TrajectoryKind = registry.enums.TrajectoryKind

PERSON_DIMS = [0.5, 0.5, 1.7]


def _static(position, dims, label: str = "box", shape: ShapeKind = ShapeKind.box):
    return schemas.SceneObject(
        shape=shape,
        dims=list(dims),
        trajectory=schemas.Trajectory(position=list(position)),
        obstacle_class=ObstacleClass.static,
        label=label,
    )


def _walker(start, velocity, label: str = "person", dropouts: Optional[list] = None):
    return schemas.SceneObject(
        shape=ShapeKind.cylinder,
        dims=PERSON_DIMS,
        trajectory=schemas.Trajectory(kind=TrajectoryKind.linear, position=list(start), velocity=list(velocity)),
        obstacle_class=ObstacleClass.dynamic,
        label=label,
        dropouts=dropouts or [],
    )


def empty_scene(duration: float = 1.0) -> Any:
    return schemas.SceneScript(name="empty", duration=duration)


def single_box(distance: float = 2.0, size: float = 1.0, lateral: float = 0.0, duration: float = 0.0) -> Any:
    """One cube straight ahead; duration 0 gives a single frame."""
    box = _static([distance + size / 2.0, lateral, size / 2.0 + 0.5], [size] * 3)
    return schemas.SceneScript(name="single_box", duration=max(duration, 1e-6), objects=[box])


def static_scene(duration: float = 49 / 30.0) -> Any:
    """Three boxes and a pillar, nothing moves (50 frames at 30 Hz by default)."""
    objects = [
        _static([3.0, 0.9, 0.6], [0.8, 0.8, 1.2]),
        _static([4.0, -1.0, 0.75], [1.0, 0.6, 1.5]),
        _static([5.5, 0.0, 1.0], [0.6, 2.0, 2.0], label="wall"),
        _static([2.5, -0.6, 1.0], [0.4, 0.4, 2.0], label="pillar", shape=ShapeKind.cylinder),
    ]
    return schemas.SceneScript(name="static", duration=duration, objects=objects)


def walker_scene(speed: float = 1.0, duration: float = 2.0, heading_deg: float = -126.87) -> Any:
    """One person crossing obliquely toward the camera at constant speed."""
    heading = np.radians(heading_deg)
    velocity = [speed * float(np.cos(heading)), speed * float(np.sin(heading)), 0.0]
    return schemas.SceneScript(
        name="walker", duration=duration, objects=[_walker([3.5, 1.0, PERSON_DIMS[2] / 2.0], velocity)]
    )


def person_approaches_wall(duration: float = 3.0, handoff: float = 1.5) -> Any:
    """A person walks obliquely toward a wall and the sensor loses them for three frames.

    In the first lost frame a low cart, dark to the sensor until then, shows up 0.8 m ahead of
    the person and rolls away along their walking direction. The cart is the nearest detection to
    where the person should be, but its size is nothing like a person's.
    """
    if not 0.0 < handoff < duration - 0.5:
        raise ValueError("handoff must leave at least 0.5 s of scene after it")
    start = np.array([3.0, -2.0])
    step = np.array([0.4, 1.2])
    at_handoff = start + step * handoff
    person = _walker(
        [*start.tolist(), PERSON_DIMS[2] / 2.0],
        [*step.tolist(), 0.0],
        # frames at handoff + 0, 1 and 2 frame periods
        dropouts=[[handoff - 0.01, handoff + 0.09]],
    )
    cart_x, cart_y = float(at_handoff[0]), float(at_handoff[1]) + 0.8
    cart = schemas.SceneObject(
        shape=ShapeKind.box,
        dims=[1.0, 1.0, 0.8],
        trajectory=schemas.Trajectory(
            kind=TrajectoryKind.waypoints,
            waypoints=[
                [0.0, cart_x, cart_y, 0.4],
                [handoff, cart_x, cart_y, 0.4],
                [duration, cart_x, cart_y + 5.0 * (duration - handoff), 0.4],
            ],
        ),
        obstacle_class=ObstacleClass.dynamic,
        label="cart",
        dropouts=[[0.0, handoff - 0.01]],
    )
    wall = _static([6.0, 1.0, 1.0], [0.3, 3.0, 2.0], label="wall")
    return schemas.SceneScript(name="person_approaches_wall", duration=duration, objects=[person, cart, wall])


def camera_sweep_reveals_box(speed: float = 4.0, yaw_rate_deg: float = 0.0, duration: float = 24 / 30.0) -> Any:
    """A long static wall slides in from the left image edge while the camera strafes toward +y.

    Only the field of view reveals new surface; nothing in the scene moves. About 0.3 m of the
    wall is visible in the first frame and every frame uncovers speed/30 m more, so the center of
    the visible part moves at half the camera speed.
    """
    camera = schemas.CameraTrajectory(
        position=schemas.Trajectory(kind=TrajectoryKind.linear, position=[0.0, 0.0, 1.0], velocity=[0.0, speed, 0.0]),
        yaw_deg=0.0,
        yaw_rate_deg=yaw_rate_deg,
    )
    # front face at x = 3.0, right end at y = 2.2, running 8 m out of view to the left
    wall = _static([3.15, 6.2, 1.0], [0.3, 8.0, 2.0], label="wall")
    return schemas.SceneScript(name="camera_sweep", duration=duration, camera=camera, objects=[wall])


def far_object(distance: float = 5.0, duration: float = 9 / 30.0) -> Any:
    """A person-sized box beyond the dense-range cutoff used by the range-extension check."""
    obj = _static([distance, 0.0, 0.85], [0.5, 0.5, 1.7], label="person")
    return schemas.SceneScript(name="far_object", duration=duration, objects=[obj])


def bench_scene(duration: float = 1.0, seed: int = 0) -> Any:
    """Five objects (three static, two walking) for per-stage timing."""
    rng = np.random.default_rng([seed, 5])
    jitter = rng.uniform(-0.2, 0.2, size=(5, 2))
    objects = [
        _static([3.0 + jitter[0, 0], 1.2 + jitter[0, 1], 0.5], [0.8, 0.8, 1.0]),
        _static([4.5 + jitter[1, 0], -1.5 + jitter[1, 1], 0.75], [1.0, 0.6, 1.5]),
        _static([6.0 + jitter[2, 0], 0.5 + jitter[2, 1], 1.0], [0.5, 2.5, 2.0], label="wall"),
        _walker([3.5 + jitter[3, 0], -0.5 + jitter[3, 1], 0.85], [0.0, 0.8, 0.0]),
        _walker([5.0 + jitter[4, 0], 1.5 + jitter[4, 1], 0.85], [-0.5, -0.7, 0.0]),
    ]
    return schemas.SceneScript(name="bench", duration=duration, objects=objects)


def _footprint_gap(points: np.ndarray, center, dims) -> float:
    """Smallest planar distance from any of the points to an axis-aligned footprint."""
    half = np.asarray(dims, dtype=np.float64)[:2] / 2.0
    outside = np.clip(np.abs(points[:, :2] - np.asarray(center, dtype=np.float64)[:2]) - half, 0.0, None)
    return float(np.min(np.linalg.norm(outside, axis=1)))


def _walker_path(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    x = float(rng.uniform(2.5, 5.5))
    heading = float(rng.uniform(0.0, 2.0 * np.pi))
    speed = float(rng.uniform(0.5, 1.5))
    start = np.array([x, float(rng.uniform(-0.4, 0.4)) * x, PERSON_DIMS[2] / 2.0])
    end = start + np.array([np.cos(heading), np.sin(heading), 0.0]) * speed * 2.0
    end[0] = max(end[0], 2.0)
    end[1] = float(np.clip(end[1], -0.6 * end[0], 0.6 * end[0]))
    return start, end


def random_scene(rng: np.random.Generator, name: str, duration: float, tries: int = 50) -> Any:
    """1-2 walkers and 2-4 static boxes placed inside the default field of view.

    Boxes are redrawn until they keep half a meter of clearance beyond the person radius from
    every walker path, so nobody walks through furniture; a box with no free spot is left out.
    """
    walkers, paths = [], []
    for _ in range(int(rng.integers(1, 3))):
        start, end = _walker_path(rng)
        paths.append(start + np.linspace(0.0, 1.0, 21)[:, None] * (end - start))
        # a walker bounces between two points so it stays in view for long scripts
        times = np.arange(0.0, duration + 2.5, 2.0)
        waypoints = [[float(t), *(end if k % 2 else start).tolist()] for k, t in enumerate(times)]
        walkers.append(
            schemas.SceneObject(
                shape=ShapeKind.cylinder,
                dims=PERSON_DIMS,
                trajectory=schemas.Trajectory(kind=TrajectoryKind.waypoints, waypoints=waypoints),
                obstacle_class=ObstacleClass.dynamic,
                label="person",
            )
        )
    clearance = PERSON_DIMS[0] / 2.0 + 0.5
    statics = []
    for _ in range(int(rng.integers(2, 5))):
        for _ in range(tries):
            x = float(rng.uniform(3.0, 7.0))
            y = float(rng.uniform(-0.5, 0.5)) * x
            dims = [float(rng.uniform(0.4, 1.2)), float(rng.uniform(0.4, 1.5)), float(rng.uniform(0.8, 2.0))]
            if all(_footprint_gap(path, [x, y], dims) >= clearance for path in paths):
                statics.append(_static([x, y, dims[2] / 2.0], dims))
                break
    return schemas.SceneScript(name=name, duration=duration, objects=statics + walkers)


def noisy_suite(
    count: int = 20, duration: float = 30.0, seed: int = 0, blob_probability: float = 0.3
) -> list[tuple[Any, Any]]:
    """(SceneScript, NoiseModel) pairs with 1% depth noise and blob artifacts, fixed by seed."""
    rng = np.random.default_rng([seed, 20])
    suite = []
    for k in range(count):
        script = random_scene(rng, f"noisy_{k:02d}", duration)
        noise = registry.NoiseModel(
            sigma_ratio=registry.enums.NoiseDefaults.DEPTH_SIGMA_RATIO,
            blob_probability=blob_probability,
            blob_lifetime_frames=3,
            seed=seed * 1000 + k,
        )
        suite.append((script, noise))
    return suite


PRESETS: dict[str, Callable[..., Any]] = {
    "empty": empty_scene,
    "single_box": single_box,
    "static": static_scene,
    "walker": walker_scene,
    "person_approaches_wall": person_approaches_wall,
    "camera_sweep": camera_sweep_reveals_box,
    "far_object": far_object,
    "bench": bench_scene,
}


def build_preset(name: str, **kwargs: Any) -> Any:
    if name not in PRESETS:
        raise ValueError(f"unknown scene preset '{name}'; choose from {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)


def preset_noise(noisy: bool, seed: int = 0, blob_probability: Optional[float] = None) -> Any:
    if not noisy:
        return registry.NoiseModel(seed=seed)
    return registry.NoiseModel.noisy(seed=seed, blob_probability=0.3 if blob_probability is None else blob_probability)
