"""Evaluation metrics: normal MAE, PSNR, SSIM, and angular coverage.

SSIM follows the standard Wang et al. formulation (11x11 Gaussian
window, sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1) so values are
directly comparable to common reference implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError
from .geometry import CameraModel, DisplayModel, SceneMaps

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def normal_mae(est, gt, mask) -> float:
    """Mean angular error between unit-normal maps, in degrees."""
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not np.any(mask):
        raise DataError("normal MAE over an empty mask")
    dots = np.clip(np.sum(est[mask] * gt[mask], axis=-1), -1.0, 1.0)
    return float(np.degrees(np.mean(np.arccos(dots))))


def psnr(est, gt, mask=None, saturation_exclude: bool = False,
         saturation_level: float = 1.0 - 1e-6) -> float:
    """Peak signal-to-noise ratio in dB against a [0, 1] reference.

    With saturation_exclude, entries whose reference value reaches the
    saturation level are dropped before the mean.  Identical inputs
    return the +inf sentinel.
    """
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise DataError(f"image shapes differ: {est.shape} vs {gt.shape}")
    if mask is None:
        sel_est, sel_gt = est.ravel(), gt.ravel()
    else:
        mask = np.asarray(mask, dtype=bool)
        sel_est, sel_gt = est[mask].ravel(), gt[mask].ravel()
    if saturation_exclude:
        keep = sel_gt < saturation_level
        sel_est, sel_gt = sel_est[keep], sel_gt[keep]
    if sel_gt.size == 0:
        raise DataError("PSNR over an empty selection")
    mse = float(np.mean((sel_est - sel_gt) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_plane(x, y):
    pad = (SSIM_WINDOW - 1) // 2
    truncate = 3.5  # radius int(3.5 * 1.5 + 0.5) = 5, an 11x11 window
    filt = lambda im: gaussian_filter(im, SSIM_SIGMA, truncate=truncate)
    ux, uy = filt(x), filt(y)
    vx = filt(x * x) - ux * ux
    vy = filt(y * y) - uy * uy
    vxy = filt(x * y) - ux * uy
    C1, C2 = _K1 ** 2, _K2 ** 2
    S = ((2 * ux * uy + C1) * (2 * vxy + C2)) / (
        (ux * ux + uy * uy + C1) * (vx + vy + C2)
    )
    return float(np.mean(S[pad:-pad, pad:-pad]))


def ssim(est, gt) -> float:
    """Mean structural similarity; channels of RGB inputs are averaged."""
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape:
        raise DataError(f"image shapes differ: {est.shape} vs {gt.shape}")
    if est.ndim not in (2, 3):
        raise DataError("ssim expects (H, W) or (H, W, C) images")
    if min(est.shape[0], est.shape[1]) < SSIM_WINDOW:
        raise DataError(
            f"images must be at least {SSIM_WINDOW} pixels on a side"
        )
    if est.ndim == 2:
        return _ssim_plane(est, gt)
    return float(np.mean([
        _ssim_plane(est[..., c], gt[..., c]) for c in range(est.shape[2])
    ]))


@dataclass(frozen=True)
class AngularCoverage:
    """Rusinkiewicz angles for every (masked pixel, superpixel) pair."""

    theta_h: np.ndarray  # radians, angle(n, h)
    theta_d: np.ndarray  # radians, angle(h, i)

    def histogram(self, bins: int = 45):
        """2D counts over (theta_d, theta_h) in degrees, plus bin edges."""
        counts, d_edges, h_edges = np.histogram2d(
            np.degrees(self.theta_d), np.degrees(self.theta_h),
            bins=bins, range=[[0.0, 90.0], [0.0, 90.0]],
        )
        return counts, d_edges, h_edges


def angular_coverage(scene: SceneMaps, display: DisplayModel,
                     camera: CameraModel, mask=None) -> AngularCoverage:
    """Half-angle/difference-angle samples covered by the display rig.

    For each masked pixel and each superpixel: i points at the
    superpixel, o at the camera center, h bisects them; theta_h is the
    angle between n and h and theta_d between h and i.
    """
    sel = scene.mask if mask is None else (scene.mask & np.asarray(mask, bool))
    if not np.any(sel):
        raise DataError("angular coverage over an empty mask")
    pts = scene.points[sel]
    nrm = scene.normal[sel]
    center = -np.einsum("ji,j->i", camera.rotation, camera.translation)
    o = center[None, :] - pts
    o /= np.linalg.norm(o, axis=-1, keepdims=True)
    offsets = display.superpixel_positions[None, :, :] - pts[:, None, :]
    i_dir = offsets / np.linalg.norm(offsets, axis=-1, keepdims=True)
    h = i_dir + o[:, None, :]
    h /= np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-12)
    cos_h = np.clip(np.sum(h * nrm[:, None, :], axis=-1), -1.0, 1.0)
    cos_d = np.clip(np.sum(h * i_dir, axis=-1), -1.0, 1.0)
    return AngularCoverage(
        theta_h=np.arccos(cos_h).ravel(),
        theta_d=np.arccos(cos_d).ravel(),
    )
