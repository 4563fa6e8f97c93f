from __future__ import annotations

import pytest

from models.registry import registry


@pytest.fixture(autouse=True)
def _isolation(tmp_path, monkeypatch):
    # Each test writes into its own temp dir and ignores any shell config
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    monkeypatch.setenv("DODT_SEED", "0")
    monkeypatch.delenv("DODT_CONFIG", raising=False)
    yield


@pytest.fixture
def small_intr():
    """160x120 with the default field of view (fx = fy = 96.25)."""
    return registry.CameraIntrinsics.scaled(160, 120)


@pytest.fixture
def medium_intr():
    return registry.CameraIntrinsics.scaled(320, 240)


@pytest.fixture
def camera_pose():
    """Camera at 1 m height looking along world +x."""
    return registry.Pose.horizontal([0.0, 0.0, 1.0], 0.0)
