"""Initial Gaussian sets: detail-weighted static sampling and per-track dynamics.

Static Gaussians are drawn on strided frames with probability proportional
to Laplacian-of-Gaussian magnitude, zeroed inside instance masks and at
invalid depth, then unprojected. Dynamic Gaussians take their center and
position deformation from a fitted trajectory curve; color and scale come
from the pixel at the track's query frame (its first observed frame).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .encoding import DeformationParams, PolyFourierCurve, TrackCurve
from .errors import NonPositiveDepth
from .formats import DepthMap, InstanceMaskFrame
from .geometry import CameraFrame, Quaternion, unproject_pixels
from .records import GaussianRecord
from .sceneflow import Trajectory3D

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

DEFAULT_ALPHA = 0.1
DEFAULT_SIGMA = 1.6
DEFAULT_EPS_LOG = 1e-4
DEFAULT_K_SCALE = 1.5
DEFAULT_R_MIN = 0.5
DEFAULT_R_MAX = 8.0

# kernel support wide enough that a constant image maps to (numerical) zero
_LOG_TRUNCATE = 8.0


@dataclass(frozen=True)
class LoGMap:
    """Per-pixel Laplacian-of-Gaussian magnitude of the luma channel."""

    values: np.ndarray
    sigma: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("LoG map must be 2-D")
        if vals.min() < 0.0:
            raise ValueError("LoG magnitude must be non-negative")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


def log_magnitude(image: np.ndarray, sigma: float = DEFAULT_SIGMA) -> LoGMap:
    """|LoG| of the luma of an (H, W, 3) image, reflect-padded at borders."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    gray = image @ LUMA_WEIGHTS
    response = ndimage.gaussian_laplace(gray, sigma=sigma, mode="reflect", truncate=_LOG_TRUNCATE)
    return LoGMap(values=np.abs(response), sigma=sigma)


def estimate_scale(
    log_map: LoGMap,
    depth: float,
    cam: CameraFrame,
    pixel: tuple[float, float],
    k_scale: float = DEFAULT_K_SCALE,
    eps_log: float = DEFAULT_EPS_LOG,
    r_min: float = DEFAULT_R_MIN,
    r_max: float = DEFAULT_R_MAX,
) -> np.ndarray:
    """Isotropic scale: detail-limited pixel radius converted by depth / fx."""
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth {depth} at pixel {pixel}")
    h, w = log_map.values.shape
    col = min(max(int(round(pixel[0])), 0), w - 1)
    row = min(max(int(round(pixel[1])), 0), h - 1)
    radius_px = np.clip(k_scale / (log_map.values[row, col] + eps_log), r_min, r_max)
    radius = radius_px * depth / cam.K[0, 0]
    return np.full(3, radius)


def sample_static(
    images: list[np.ndarray],
    masks: list[InstanceMaskFrame],
    depths: list[DepthMap],
    cams: list[CameraFrame],
    stride: int = 20,
    n_per_frame: int = 4000,
    seed: int = 0,
    sigma: float = DEFAULT_SIGMA,
    alpha: float = DEFAULT_ALPHA,
    scale_params: dict | None = None,
) -> list[GaussianRecord]:
    """Draw static Gaussians on every stride-th frame.

    Sampling probability is LoG magnitude, zeroed inside instance masks and
    where depth is non-positive, so every drawn pixel unprojects cleanly.
    A frame whose probability mass is zero is skipped with a warning.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not len(images) == len(masks) == len(depths) == len(cams):
        raise ValueError("images, masks, depths and cams must align per frame")
    scale_params = scale_params or {}
    records: list[GaussianRecord] = []
    for frame in range(0, len(images), stride):
        cam = cams[frame]
        image = np.asarray(images[frame], dtype=np.float64)
        depth = depths[frame].values.astype(np.float64)
        log_map = log_magnitude(image, sigma=sigma)
        prob = log_map.values.copy()
        prob[masks[frame].ids > 0] = 0.0
        prob[depth <= 0.0] = 0.0
        total = prob.sum()
        if total <= 0.0:
            logger.warning("frame %d: zero sampling mass, skipped", frame)
            continue
        rng = np.random.default_rng([seed, frame])
        flat = rng.choice(prob.size, size=n_per_frame, p=(prob / total).ravel())
        rows, cols = np.unravel_index(flat, prob.shape)
        pixels = np.stack([cols, rows], axis=1).astype(np.float64)
        positions = unproject_pixels(pixels, depth[rows, cols], cam)
        for (col, row), pos in zip(zip(cols, rows), positions):
            scale = estimate_scale(
                log_map, float(depth[row, col]), cam, (float(col), float(row)), **scale_params
            )
            records.append(
                GaussianRecord(
                    kind="static",
                    position=pos,
                    rotation=Quaternion.identity(),
                    log_scale=np.log(scale),
                    opacity=alpha,
                    color=np.clip(image[row, col], 0.0, 1.0),
                )
            )
    return records


def init_dynamic(
    trajectories: list[Trajectory3D],
    curves: list[TrackCurve],
    images: list[np.ndarray],
    log_maps: list[LoGMap],
    depths: list[DepthMap],
    cams: list[CameraFrame],
    alpha: float = DEFAULT_ALPHA,
    scale_params: dict | None = None,
) -> list[GaussianRecord]:
    """One dynamic Gaussian per refined trajectory.

    The curve's constant column becomes the center; the remaining columns
    the position deformation. Rotation starts at identity with zero
    increment coefficients. Appearance is read at the track's first
    observed pixel; when the depth map is invalid there, the trajectory's
    own camera-space depth stands in.
    """
    scale_params = scale_params or {}
    by_id = {c.track_id: c for c in curves}
    if len(by_id) != len(curves):
        raise ValueError("duplicate track_id among curves")
    records: list[GaussianRecord] = []
    for traj in trajectories:
        curve_entry = by_id.get(traj.track_id)
        if curve_entry is None:
            raise ValueError(f"no curve for track {traj.track_id}")
        curve: PolyFourierCurve = curve_entry.curve
        frame = traj.first_observed_frame()
        cam = cams[frame]
        image = np.asarray(images[frame], dtype=np.float64)
        h, w = image.shape[:2]
        col = min(max(int(round(traj.px[frame])), 0), w - 1)
        row = min(max(int(round(traj.py[frame])), 0), h - 1)
        depth = float(depths[frame].values[row, col])
        if depth <= 0.0:
            depth = float((cam.R @ traj.positions[frame] + cam.t)[2])
        scale = estimate_scale(
            log_maps[frame], depth, cam, (float(col), float(row)), **scale_params
        )
        spec = curve.spec
        deformation = DeformationParams(
            position_curve=curve,
            rotation_coeffs=np.zeros((4, spec.dimension - 1)),
            q0=Quaternion.identity(),
        )
        records.append(
            GaussianRecord(
                kind="dynamic",
                position=curve.mu0,
                rotation=Quaternion.identity(),
                log_scale=np.log(scale),
                opacity=alpha,
                color=np.clip(image[row, col], 0.0, 1.0),
                instance_id=traj.instance_id,
                deformation=deformation,
            )
        )
    return records
