"""Photometric-stereo normal initialization.

Two Lambertian solvers: the classic far-field least squares over known
directional lights, and a near-field variant that collapses every
display pattern into per-pixel effective light vectors

    a_m(p) = sum_i L_i(pattern_m) falloff(d_i(p)) i_dir(p)

so the pixel model is I_m = rho (n . a_m).  Backlight enters through
the radiances L_i, so captures need no pre-subtraction.  Both solvers
run closed-form 3x3 normal equations per pixel, which keeps results
independent of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import CameraModel, DisplayModel, backproject
from .render import DisplayPattern, FalloffParams, falloff, pattern_radiance

LUMINANCE = np.array([0.299, 0.587, 0.114])
_MEAS_CHUNK = 16
_DET_EPS = 1e-18


@dataclass(frozen=True)
class PsResult:
    """Per-pixel normal, Lambertian albedo estimate, and fit residual.

    ``mask`` marks pixels that produced a well-posed solve; dropped
    pixels (rank-deficient or fully invalid) are counted in n_dropped.
    """

    normal: np.ndarray  # (H, W, 3)
    pseudo_diffuse: np.ndarray  # (H, W, 3)
    residual: np.ndarray  # (H, W)
    mask: np.ndarray  # (H, W) bool
    n_dropped: int = 0


def shadow_saturation_mask(captures, low_thresh: float = 0.02,
                           high_thresh: float = 0.98) -> np.ndarray:
    """Elementwise validity: low <= value <= high, same shape as the input."""
    if not 0 < low_thresh < high_thresh or high_thresh >= 1:
        raise DataError(
            f"thresholds must satisfy 0 < low < high < 1, got "
            f"({low_thresh}, {high_thresh})"
        )
    captures = np.asarray(captures, dtype=float)
    return (captures >= low_thresh) & (captures <= high_thresh)


def _solve33(A, rhs):
    """Batched 3x3 solve by the adjugate; returns (solution, determinant).

    Plain vectorized arithmetic so results are bit-stable regardless of
    BLAS threading.
    """
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
    d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
    g, h, i = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
    co00 = e * i - f * h
    co01 = c * h - b * i
    co02 = b * f - c * e
    co10 = f * g - d * i
    co11 = a * i - c * g
    co12 = c * d - a * f
    co20 = d * h - e * g
    co21 = b * g - a * h
    co22 = a * e - b * d
    det = a * co00 + b * co10 + c * co20
    safe = np.where(np.abs(det) > _DET_EPS, det, 1.0)
    x0 = (co00 * rhs[..., 0] + co01 * rhs[..., 1] + co02 * rhs[..., 2]) / safe
    x1 = (co10 * rhs[..., 0] + co11 * rhs[..., 1] + co12 * rhs[..., 2]) / safe
    x2 = (co20 * rhs[..., 0] + co21 * rhs[..., 1] + co22 * rhs[..., 2]) / safe
    return np.stack([x0, x1, x2], axis=-1), det


def _finish(b_lum, b_rgb, resid, mask, dropped, shape):
    H, W = shape
    norm = np.linalg.norm(b_lum, axis=-1)
    ok = norm > 1e-12
    n_flat = np.zeros_like(b_lum)
    n_flat[ok] = b_lum[ok] / norm[ok, None]

    normal = np.zeros((H, W, 3))
    albedo = np.zeros((H, W, 3))
    residual = np.zeros((H, W))
    out_mask = np.zeros((H, W), dtype=bool)
    idx = np.flatnonzero(mask.ravel())
    keep = ~dropped & ok
    normal.reshape(-1, 3)[idx[keep]] = n_flat[keep]
    albedo.reshape(-1, 3)[idx[keep]] = b_rgb[keep]
    residual.reshape(-1)[idx[keep]] = resid[keep]
    out_mask.reshape(-1)[idx[keep]] = True
    return PsResult(normal=normal, pseudo_diffuse=albedo, residual=residual,
                    mask=out_mask, n_dropped=int(np.count_nonzero(~keep)))


def woodham_ps(images, light_dirs, light_intensities, mask,
               validity=None) -> PsResult:
    """Far-field Lambertian photometric stereo.

    Solves I_m = rho (n . l_m) E_m on the luminance channel per pixel,
    then refits per-channel albedo against the recovered shading.

    Raises:
        DataError: fewer than 3 lights or a rank-deficient light matrix.
    """
    images = np.asarray(images, dtype=float)
    L = np.asarray(light_dirs, dtype=float)
    E = np.asarray(light_intensities, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    M = images.shape[0]
    if M < 3 or L.shape != (M, 3) or E.shape != (M,):
        raise DataError("need M >= 3 images with matching light_dirs and intensities")
    A = L * E[:, None]
    if np.linalg.matrix_rank(A, tol=1e-10) < 3:
        raise DataError("light directions are coplanar; the solve is rank-deficient")

    if images.ndim == 3:
        images = images[..., None].repeat(3, axis=-1)
    gray = np.einsum("mhwc,c->mhw", images, LUMINANCE, optimize=False)
    I = gray[:, mask]  # (M, P)
    if validity is None:
        V = np.ones_like(I, dtype=bool)
    else:
        V = np.asarray(validity, dtype=bool)
        if V.ndim == 4:
            V = V.all(axis=-1)
        V = V[:, mask]

    # per-pixel normal equations; validity varies per pixel so no shared pinv
    Vf = V.astype(float)
    AtA = np.einsum("mp,mkl->pkl", Vf, A[:, :, None] * A[:, None, :], optimize=False)
    Atb = np.einsum("mp,mk->pk", Vf * I, A, optimize=False)
    b, det = _solve33(AtA, Atb)
    dropped = np.abs(det) <= _DET_EPS

    # per-channel albedo against the recovered shading s_m = (n . l_m) E_m
    norm = np.linalg.norm(b, axis=-1)
    n_hat = b / np.maximum(norm, 1e-12)[:, None]
    shading = np.maximum(np.einsum("mk,pk->mp", A, n_hat, optimize=False), 0.0) * Vf
    denom = np.maximum(np.sum(shading * shading, axis=0), 1e-30)
    rgb = images[:, mask, :]  # (M, P, 3)
    b_rgb = np.einsum("mp,mpc->pc", shading, rgb, optimize=False) / denom[:, None]

    pred = shading * norm[None, :]
    nvalid = np.maximum(V.sum(axis=0), 1)
    resid = np.sqrt(np.sum((I * Vf - pred) ** 2, axis=0) / nvalid)
    return _finish(b, b_rgb, resid, mask, dropped, mask.shape)


def nearfield_ps(captures, patterns, display: DisplayModel, camera: CameraModel,
                 depth, falloff_params: FalloffParams = FalloffParams(),
                 mask=None, validity=None) -> PsResult:
    """Near-field Lambertian photometric stereo over display patterns.

    The depth map may be the true geometry or a uniform-depth guess;
    superpixel directions/falloff come from it through the camera.
    Per-channel solves are merged with luminance weights for the
    direction and kept separate for the albedo.
    """
    captures = np.asarray(captures, dtype=float)
    depth = np.asarray(depth, dtype=float)
    M = captures.shape[0]
    if M < 3 or len(patterns) != M:
        raise DataError("need M >= 3 captures with one pattern each")
    if mask is None:
        mask = depth > 0
    mask = np.asarray(mask, dtype=bool) & (depth > 0)

    pts = backproject(camera, depth)[mask]  # (P, 3)
    offsets = display.superpixel_positions[None, :, :] - pts[:, None, :]
    dist = np.sqrt(np.sum(offsets * offsets, axis=-1))
    if np.any(dist < 1e-12):
        raise DataError("a scene point coincides with a superpixel")
    geom = offsets / dist[:, :, None] * falloff(dist, falloff_params)[:, :, None]

    radiances = np.stack([pattern_radiance(p, display) for p in patterns])  # (M, N, 3)
    I = captures[:, mask, :]  # (M, P, 3)
    if validity is None:
        V = np.ones_like(I, dtype=bool)
    else:
        V = np.asarray(validity, dtype=bool)
        if V.ndim == 3:
            V = V[..., None].repeat(3, axis=-1)
        V = V[:, mask, :]
    Vf = V.astype(float)

    P = pts.shape[0]
    AtA = np.zeros((P, 3, 3, 3))  # pixel, k, l, channel
    Atb = np.zeros((P, 3, 3))  # pixel, k, channel
    for m0 in range(0, M, _MEAS_CHUNK):
        m1 = min(m0 + _MEAS_CHUNK, M)
        # effective light vectors a[m, p, k, c]
        a = np.einsum("pik,mic->mpkc", geom, radiances[m0:m1], optimize=False)
        av = a * Vf[m0:m1, :, None, :]
        AtA += np.einsum("mpkc,mplc->pklc", av, a, optimize=False)
        Atb += np.einsum("mpkc,mpc->pkc", av, I[m0:m1], optimize=False)

    b_ch = np.empty((P, 3, 3))  # pixel, k, channel
    det_ch = np.empty((P, 3))
    for c in range(3):
        b_ch[..., c], det_ch[..., c] = _solve33(AtA[..., c], Atb[..., c])
    dropped = np.all(np.abs(det_ch) <= _DET_EPS, axis=-1)
    b_ch[np.abs(det_ch) <= _DET_EPS] = 0.0

    b_lum = np.einsum("pkc,c->pk", b_ch, LUMINANCE, optimize=False)
    b_rgb = np.linalg.norm(b_ch, axis=1)  # (P, 3) per-channel magnitude

    # residual over all valid measurement-channel entries
    nvalid = np.maximum(Vf.sum(axis=(0, 2)), 1.0)
    resid2 = np.zeros(P)
    for m0 in range(0, M, _MEAS_CHUNK):
        m1 = min(m0 + _MEAS_CHUNK, M)
        a = np.einsum("pik,mic->mpkc", geom, radiances[m0:m1], optimize=False)
        pred = np.einsum("mpkc,pkc->mpc", a, b_ch, optimize=False)
        resid2 += np.sum(((I[m0:m1] - pred) * Vf[m0:m1]) ** 2, axis=(0, 2))
    resid = np.sqrt(resid2 / nvalid)
    return _finish(b_lum, b_rgb, resid, mask, dropped, mask.shape)
