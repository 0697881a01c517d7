"""Pinhole cameras, rigid transforms, quaternions and epipolar geometry.

Conventions used across the package:
  * extrinsics map world to camera: x_cam = R @ x_world + t
  * pixel coordinates are raw (unnormalized), origin at the top-left
    pixel center, x right, y down
  * quaternions are Hamilton, scalar first (w, x, y, z)
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBaseline,
    NonOrthonormalMatrix,
    NonPositiveDepth,
    NonUnitQuaternion,
    PointBehindCamera,
    ZeroNormQuaternion,
)

_ORTHO_TOL = 1e-9
_BASELINE_TOL = 1e-9


def _as_fixed(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraFrame:
    """Calibrated pinhole camera at one frame of a sequence."""

    frame_index: int
    width: int
    height: int
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _as_fixed(self.K, (3, 3)))
        object.__setattr__(self, "R", _as_fixed(self.R, (3, 3)))
        object.__setattr__(self, "t", _as_fixed(self.t, (3,)))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        K = self.K
        if K[1, 0] != 0.0 or K[2, 0] != 0.0 or K[2, 1] != 0.0 or K[2, 2] != 1.0:
            raise ValueError("K must be upper triangular with K[2,2] == 1")
        if K[0, 0] <= 0.0 or K[1, 1] <= 0.0:
            raise ValueError("focal lengths must be positive")
        _check_rotation(self.R)

    def center(self) -> np.ndarray:
        """World-space camera center -R^T t."""
        return -self.R.T @ self.t


def _check_rotation(R: np.ndarray) -> None:
    if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL:
        raise NonOrthonormalMatrix("R^T R deviates from identity")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise NonOrthonormalMatrix("det(R) != 1")


def project(point: np.ndarray, cam: CameraFrame) -> tuple[np.ndarray, float]:
    """Project one world point; returns (pixel, depth).

    Raises PointBehindCamera when camera-space depth is not positive.
    """
    pc = cam.R @ np.asarray(point, dtype=np.float64) + cam.t
    if pc[2] <= 0.0:
        raise PointBehindCamera(f"depth {pc[2]:.3g} <= 0")
    uvw = cam.K @ pc
    return uvw[:2] / pc[2], float(pc[2])


def project_points(points: np.ndarray, cam: CameraFrame) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N,3) points; no behind-camera check.

    Returns (pixels (N,2), depths (N,)). Callers filter on depth > 0.
    """
    pc = points @ cam.R.T + cam.t
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = (pc @ cam.K.T)[:, :2] / z[:, None]
    return uv, z


def unproject(pixel: np.ndarray, depth: float, cam: CameraFrame) -> np.ndarray:
    """Back-project one pixel at the given positive depth to world space."""
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth {depth:.3g} <= 0")
    x, y = float(pixel[0]), float(pixel[1])
    ray = np.linalg.solve(cam.K, np.array([x, y, 1.0]))
    return cam.R.T @ (ray * depth - cam.t)


def unproject_pixels(pixels: np.ndarray, depths: np.ndarray, cam: CameraFrame) -> np.ndarray:
    """Vectorized unprojection of (N,2) pixels with (N,) positive depths."""
    ones = np.ones((pixels.shape[0], 1))
    rays = np.concatenate([pixels, ones], axis=1) @ np.linalg.inv(cam.K).T
    return (rays * depths[:, None] - cam.t) @ cam.R


def cross_matrix(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix [v]_x with [v]_x w = v x w."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def fundamental_matrix(cam_a: CameraFrame, cam_b: CameraFrame) -> np.ndarray:
    """Fundamental matrix mapping pixels of cam_a to epipolar lines in cam_b.

    F = K_b^-T [t_rel]_x R_rel K_a^-1 with the relative motion taking
    camera-a coordinates to camera-b coordinates. Normalized to unit
    Frobenius norm. Raises DegenerateBaseline when the centers coincide.
    """
    R_rel = cam_b.R @ cam_a.R.T
    t_rel = cam_b.t - R_rel @ cam_a.t
    if np.linalg.norm(t_rel) <= _BASELINE_TOL:
        raise DegenerateBaseline("camera centers coincide")
    E = cross_matrix(t_rel) @ R_rel
    F = np.linalg.inv(cam_b.K).T @ E @ np.linalg.inv(cam_a.K)
    return F / np.linalg.norm(F)


@dataclass(frozen=True)
class Quaternion:
    """Hamilton quaternion, scalar first."""

    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_array(q: np.ndarray) -> "Quaternion":
        w, x, y, z = (float(v) for v in q)
        return Quaternion(w, x, y, z)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n < 1e-12:
            raise ZeroNormQuaternion("cannot normalize near-zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a * b."""
    w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z
    x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y
    y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x
    z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w
    return Quaternion(w, x, y, z)


def quat_to_rotmat(q: Quaternion) -> np.ndarray:
    """Rotation matrix of a unit quaternion (NonUnitQuaternion otherwise)."""
    if abs(q.norm() - 1.0) > 1e-9:
        raise NonUnitQuaternion(f"norm {q.norm():.12g} != 1")
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * z * w, 2 * x * z + 2 * y * w],
            [2 * x * y + 2 * z * w, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * x * w],
            [2 * x * z - 2 * y * w, 2 * y * z + 2 * x * w, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def rotmat_to_quat(R: np.ndarray) -> Quaternion:
    """Quaternion of a rotation matrix, returning the w >= 0 representative."""
    R = np.asarray(R, dtype=np.float64)
    _check_rotation(R)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return Quaternion.from_array(q)


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform p -> R @ p + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _as_fixed(self.R, (3, 3)))
        object.__setattr__(self, "t", _as_fixed(self.t, (3,)))
        _check_rotation(self.R)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to one (3,) point or a stack (N,3)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.R @ pts + self.t
        return pts @ self.R.T + self.t

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `other` first, then self."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)


def geodesic_angle(R_a: np.ndarray, R_b: np.ndarray) -> float:
    """Rotation angle in radians between two rotation matrices.

    Uses ||R_a - R_b||_F = 2 sqrt(2) sin(theta / 2), which stays accurate
    for tiny angles where the arccos-of-trace form loses half the digits.
    """
    s = np.linalg.norm(R_a - R_b) / (2.0 * np.sqrt(2.0))
    return float(2.0 * np.arcsin(np.clip(s, 0.0, 1.0)))


def load_cameras(path) -> list[CameraFrame]:
    """Read a camera trajectory from a JSON array of frames."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError("camera file must contain a JSON array")
    cams = []
    for entry in doc:
        cams.append(
            CameraFrame(
                frame_index=int(entry["frame"]),
                width=int(entry["width"]),
                height=int(entry["height"]),
                K=np.array(entry["K"], dtype=np.float64).reshape(3, 3),
                R=np.array(entry["R"], dtype=np.float64).reshape(3, 3),
                t=np.array(entry["t"], dtype=np.float64),
            )
        )
    cams.sort(key=lambda c: c.frame_index)
    return cams


def save_cameras(cams: list[CameraFrame], path) -> None:
    """Write a camera trajectory as a JSON array of frames."""
    doc = [
        {
            "frame": c.frame_index,
            "width": c.width,
            "height": c.height,
            "K": [float(v) for v in c.K.reshape(-1)],
            "R": [float(v) for v in c.R.reshape(-1)],
            "t": [float(v) for v in c.t],
        }
        for c in sorted(cams, key=lambda c: c.frame_index)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
