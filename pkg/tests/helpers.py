"""Shared builders for test scenes and cameras."""

from __future__ import annotations

import numpy as np

from splatinit.geometry import CameraFrame
from splatinit.synthetic import (
    BackgroundSpec,
    CameraPathSpec,
    MotionScript,
    ObjectSpec,
    SceneSpec,
)


def tiny_scene_spec() -> SceneSpec:
    """Small fast scene whose motions lie in a degree-3 Fourier span."""
    return SceneSpec(
        name="tiny",
        frame_count=12,
        width=32,
        height=32,
        seed=5,
        camera=CameraPathSpec(velocity=(0.04, 0.0, 0.0), focal=40.0),
        background=BackgroundSpec(
            z=8.0, x_min=-3.5, x_max=4.0, y_min=-3.4, y_max=3.4, step=0.09
        ),
        objects=(
            ObjectSpec(
                instance_id=1,
                center=(-0.5, 0.0, 5.5),
                radius=0.45,
                n_points=400,
                motion=MotionScript(
                    velocity=(0.01, 0.0, 0.0), amplitude=(0.0, 0.5, 0.0), harmonic=2
                ),
            ),
            ObjectSpec(
                instance_id=2,
                center=(0.9, 0.2, 6.0),
                radius=0.4,
                n_points=350,
                motion=MotionScript(amplitude=(0.0, -0.45, 0.0), harmonic=1, turns=1.0),
            ),
        ),
    )


def normalize(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def look_at_camera(
    center,
    target,
    frame_index=0,
    width=128,
    height=128,
    focal=140.0,
    up=(0.0, -1.0, 0.0),
) -> CameraFrame:
    """Camera at `center` looking toward `target`, y down in the image."""
    center = np.asarray(center, dtype=np.float64)
    forward = normalize(np.asarray(target, dtype=np.float64) - center)
    right = normalize(np.cross(forward, np.asarray(up, dtype=np.float64)))
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    t = -R @ center
    K = np.array(
        [
            [focal, 0.0, (width - 1) / 2.0],
            [0.0, focal, (height - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return CameraFrame(frame_index=frame_index, width=width, height=height, K=K, R=R, t=t)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * z * w, 2 * x * z + 2 * y * w],
            [2 * x * y + 2 * z * w, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * x * w],
            [2 * x * z - 2 * y * w, 2 * y * z + 2 * x * w, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = normalize(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
