"""Photometric and depth losses for comparing renders against references.

All rasters are float arrays with values in [0, 1] for images; depth is in
scene units. The combined objective is

    (1 - lambda_ssim) * L1 + lambda_ssim * (1 - SSIM) + lambda_depth * (1 - rho)

where rho is the Pearson correlation between predicted and reference depth
over pixels valid in both, which makes the depth term invariant to affine
depth ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateVariance, DimensionMismatch, EmptyMask, ImageTooSmall

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class LossWeights:
    lambda_ssim: float = 0.2
    lambda_depth: float = 0.2

    def __post_init__(self):
        for name in ("lambda_ssim", "lambda_depth"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


def _check_pair(img: np.ndarray, ref: np.ndarray, ndim: int) -> tuple[np.ndarray, np.ndarray]:
    img = np.asarray(img, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if img.shape != ref.shape:
        raise DimensionMismatch(f"shape mismatch {img.shape} vs {ref.shape}")
    if img.ndim != ndim:
        raise DimensionMismatch(f"expected {ndim}-D rasters, got {img.ndim}-D")
    return img, ref


def l1_loss(img: np.ndarray, ref: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean absolute difference; `mask` selects the pixels that count."""
    img, ref = _check_pair(img, ref, 3)
    diff = np.abs(img - ref)
    if mask is None:
        return float(diff.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise DimensionMismatch(f"mask shape {mask.shape} vs image {img.shape[:2]}")
    if not mask.any():
        raise EmptyMask("no pixel selected for the photometric loss")
    return float(diff[mask].mean())


def _ssim_kernel() -> np.ndarray:
    offsets = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    k = np.exp(-(offsets**2) / (2.0 * SSIM_SIGMA**2))
    k /= k.sum()
    return np.outer(k, k)


def _ssim_channel(x: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    blur = lambda a: ndimage.correlate(a, kernel, mode="constant")
    mu_x, mu_y = blur(x), blur(y)
    sig_x = blur(x * x) - mu_x * mu_x
    sig_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sig_x + sig_y + SSIM_C2)
    return num / den


def ssim_loss(img: np.ndarray, ref: np.ndarray) -> float:
    """1 - mean structural similarity, fully-covered windows only."""
    img, ref = _check_pair(img, ref, 3)
    h, w = img.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ImageTooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")
    kernel = _ssim_kernel()
    r = SSIM_WINDOW // 2
    maps = [
        _ssim_channel(img[:, :, c], ref[:, :, c], kernel)[r : h - r, r : w - r]
        for c in range(img.shape[2])
    ]
    return float(1.0 - np.mean(maps))


def pearson_depth_loss(
    depth: np.ndarray, ref: np.ndarray, valid: np.ndarray | None = None
) -> float:
    """1 - Pearson correlation over valid pixels; affine-invariant in depth."""
    depth, ref = _check_pair(depth, ref, 2)
    if valid is None:
        valid = np.ones(depth.shape, dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != depth.shape:
            raise DimensionMismatch(f"valid mask shape {valid.shape} vs {depth.shape}")
    d = depth[valid]
    r = ref[valid]
    if d.size < 2:
        raise DegenerateVariance("need at least two valid pixels")
    d = d - d.mean()
    r = r - r.mean()
    denom = np.sqrt((d * d).sum() * (r * r).sum())
    if denom <= 0.0:
        raise DegenerateVariance("constant raster has no correlation")
    return float(1.0 - (d * r).sum() / denom)


def loss_terms(
    img: np.ndarray,
    ref_img: np.ndarray,
    depth: np.ndarray,
    ref_depth: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> dict[str, float]:
    """All loss terms plus their weighted total.

    Depth pixels are compared where both rasters are positive.
    """
    terms = {
        "l1": l1_loss(img, ref_img),
        "ssim": ssim_loss(img, ref_img),
    }
    valid = (np.asarray(depth) > 0.0) & (np.asarray(ref_depth) > 0.0)
    terms["depth"] = pearson_depth_loss(depth, ref_depth, valid)
    terms["total"] = (
        (1.0 - weights.lambda_ssim) * terms["l1"]
        + weights.lambda_ssim * terms["ssim"]
        + weights.lambda_depth * terms["depth"]
    )
    return terms


def combined_loss(
    img: np.ndarray,
    ref_img: np.ndarray,
    depth: np.ndarray,
    ref_depth: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted sum of the photometric and depth terms."""
    return loss_terms(img, ref_img, depth, ref_depth, weights)["total"]


def psnr(img: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images."""
    img, ref = _check_pair(img, ref, 3)
    mse = float(np.mean((img - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(mse))
