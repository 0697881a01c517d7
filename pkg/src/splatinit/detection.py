"""Dynamic-pixel detection from optical flow and epipolar geometry.

Each flow vector proposes a correspondence x -> x + (u, v) between frames
t and t+1. Static geometry satisfies the epipolar constraint of the two
camera poses; pixels whose first-order (Sampson) epipolar error exceeds a
threshold are marked dynamic and grouped into box prompts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch
from .formats import FlowField

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class EpipolarErrorMap:
    """Per-pixel Sampson error for the pair (frame_index, frame_index + 1).

    NaN marks pixels whose flow target leaves the image; they carry no
    epipolar evidence and never count as dynamic.
    """

    width: int
    height: int
    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"error map shape {self.values.shape} != ({self.height}, {self.width})"
            )


def sampson_error(flow: FlowField, F: np.ndarray) -> EpipolarErrorMap:
    """Sampson epipolar error of every flow correspondence.

        e = (x'^T F x)^2 / ((Fx)_1^2 + (Fx)_2^2 + (F^T x')_1^2 + (F^T x')_2^2)

    Pixel coordinates are raw with homogeneous third component 1. The
    ratio is invariant to any positive rescaling of F.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.shape != (3, 3):
        raise DimensionMismatch(f"F must be 3x3, got {F.shape}")
    h, w = flow.height, flow.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    u = flow.flow[:, :, 0].astype(np.float64)
    v = flow.flow[:, :, 1].astype(np.float64)
    xa = np.stack([xs, ys, np.ones_like(xs)])
    xb = np.stack([xs + u, ys + v, np.ones_like(xs)])
    Fx = np.einsum("ij,jhw->ihw", F, xa)
    Ftxb = np.einsum("ji,jhw->ihw", F, xb)
    num = np.einsum("ihw,ihw->hw", xb, Fx) ** 2
    den = Fx[0] ** 2 + Fx[1] ** 2 + Ftxb[0] ** 2 + Ftxb[1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(den > 0.0, num / den, 0.0)
    tx, ty = xb[0], xb[1]
    outside = (tx < 0.0) | (tx >= w) | (ty < 0.0) | (ty >= h)
    values[outside] = np.nan
    return EpipolarErrorMap(width=w, height=h, values=values, frame_index=flow.frame_index)


def threshold_dynamic(err: EpipolarErrorMap, tau_epi: float) -> np.ndarray:
    """Boolean dynamic mask err > tau_epi; NaN pixels are always False."""
    if tau_epi <= 0.0:
        raise ValueError("tau_epi must be positive")
    with np.errstate(invalid="ignore"):
        return np.nan_to_num(err.values, nan=-np.inf) > tau_epi


@dataclass
class DynamicRegionSet:
    """Connected dynamic components of one frame with their box prompts.

    Boxes are (x0, y0, x1, y1) with inclusive pixel bounds, ordered by
    component label (raster scan order of first occurrence).
    """

    frame_index: int
    mask: np.ndarray
    boxes: list[tuple[int, int, int, int]]


def extract_regions(mask: np.ndarray, min_area: int = 1, frame_index: int = 0) -> DynamicRegionSet:
    """Group a dynamic mask into 8-connected components of area >= min_area."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionMismatch("mask must be 2-D")
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    kept = np.zeros_like(mask)
    boxes: list[tuple[int, int, int, int]] = []
    if count:
        areas = ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
        slices = ndimage.find_objects(labels)
        for label, (area, slc) in enumerate(zip(areas, slices), start=1):
            if area < min_area or slc is None:
                continue
            component = labels == label
            kept |= component
            ysl, xsl = slc
            boxes.append((xsl.start, ysl.start, xsl.stop - 1, ysl.stop - 1))
    return DynamicRegionSet(frame_index=frame_index, mask=kept, boxes=boxes)
