"""Near-field image formation under display patterns.

The reference camera sits at the origin of the world frame (it is the
frame), so the outgoing direction at a surface point p is -p/|p|.  Per
masked pixel the rendered intensity is

    I = clip( sum_i (n.i)_+ f(i, o) falloff(d_i) L_i + eps )

with L_i = s (P_i + B_i)^gamma the superpixel radiance,
falloff(d) = 1/(a + b d^2) + c, and eps Gaussian sensor noise.  OLAT
stacks hold the unit-radiance transport images I_i = f (n.i)_+ falloff,
so relighting is a single weighted sum over the stack.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .brdf import BasisBrdfSet, WeightMaps, eval_basis
from .errors import DataError
from .geometry import DisplayModel, SceneMaps
from .pfm import read_pfm, write_pfm

WORKING_RANGE = (0.2, 2.0)  # meters, falloff positivity is enforced here
_LIGHT_CHUNK = 18  # superpixels per rendering chunk, bounds peak memory


@dataclass(frozen=True)
class DisplayPattern:
    """Drive values P for every superpixel, (N, 3) in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"pattern must be (N, 3), got shape {v.shape}")
        if np.any(v < 0) or np.any(v > 1):
            raise DataError("pattern values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FalloffParams:
    """Distance attenuation 1/(a + b d^2) + c; defaults give plain 1/d^2."""

    a: float = 0.0
    b: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        lo, hi = WORKING_RANGE
        for d in (lo, hi):
            if self.a + self.b * d * d <= 0:
                raise DataError(
                    f"falloff denominator a + b*d^2 must stay positive over "
                    f"{WORKING_RANGE} m; fails at d={d}"
                )


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian sensor noise, deterministic under (seed, stream)."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise DataError(f"noise sigma must be >= 0, got {self.sigma}")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([int(self.seed), int(stream)])


@dataclass(frozen=True)
class OlatStack:
    """N unit-radiance transport images, (N, H, W, 3) >= 0."""

    images: np.ndarray
    clipped_flags: np.ndarray  # (N,) bool, True if clip applied at synthesis

    def __post_init__(self):
        im = np.asarray(self.images, dtype=float)
        fl = np.asarray(self.clipped_flags, dtype=bool)
        object.__setattr__(self, "images", im)
        object.__setattr__(self, "clipped_flags", fl)
        if im.ndim != 4 or im.shape[3] != 3:
            raise DataError(f"OLAT stack must be (N, H, W, 3), got {im.shape}")
        if fl.shape != (im.shape[0],):
            raise DataError("clipped_flags length must match the stack")
        if np.any(im < 0):
            raise DataError("OLAT intensities must be nonnegative")

    def __len__(self) -> int:
        return self.images.shape[0]


def display_intensity(P_i, display: DisplayModel, index: int) -> np.ndarray:
    """Radiance of one superpixel: s * (P_i + B_i) ** gamma per channel."""
    P_i = np.asarray(P_i, dtype=float)
    return display.s * (P_i + display.backlight[index]) ** display.gamma


def pattern_radiance(pattern: DisplayPattern, display: DisplayModel) -> np.ndarray:
    """(N, 3) radiances for a whole pattern."""
    if len(pattern) != display.n_superpixels:
        raise DataError(
            f"pattern length {len(pattern)} != display N = {display.n_superpixels}"
        )
    return display.s * (pattern.values + display.backlight) ** display.gamma


def falloff(d, params: FalloffParams = FalloffParams()) -> np.ndarray:
    """Distance attenuation 1/(a + b d^2) + c.

    Raises:
        DataError: the denominator is non-positive at any requested distance.
    """
    d = np.asarray(d, dtype=float)
    denom = params.a + params.b * d * d
    if np.any(denom <= 0):
        raise DataError("falloff denominator a + b*d^2 is non-positive")
    return 1.0 / denom + params.c


def masked_light_geometry(scene: SceneMaps, display: DisplayModel,
                          falloff_params: FalloffParams):
    """Per masked pixel and superpixel: directions, shading, and falloff.

    Returns (points, normals, view, directions, distances, shading,
    attenuation) with pixel axis P = mask.sum() and light axis N.  The
    shading term is the clamped cosine (n.i)_+.
    """
    pts = scene.points[scene.mask]
    nrm = scene.normal[scene.mask]
    view = -pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    offsets = display.superpixel_positions[None, :, :] - pts[:, None, :]
    dist = np.sqrt(np.sum(offsets * offsets, axis=-1))
    if np.any(dist < 1e-12):
        raise DataError("a scene point coincides with a superpixel")
    dirs = offsets / dist[:, :, None]
    shading = np.maximum(np.sum(nrm[:, None, :] * dirs, axis=-1), 0.0)
    atten = falloff(dist, falloff_params)
    return pts, nrm, view, dirs, dist, shading, atten


def transport_matrix(scene, display, bset, weights,
                     falloff_params: FalloffParams = FalloffParams()):
    """Unit-radiance transport T[p, i, c] = (n.i)_+ f(i,o) falloff(d_i).

    The pixel axis runs over masked pixels in scan order.  Evaluated in
    light chunks to keep the per-basis intermediates small.
    """
    _, nrm, view, dirs, _, shading, atten = masked_light_geometry(
        scene, display, falloff_params)
    w = weights.weights[scene.mask]
    P, N = shading.shape
    T = np.empty((P, N, 3))
    for k0 in range(0, N, _LIGHT_CHUNK):
        k1 = min(k0 + _LIGHT_CHUNK, N)
        f = eval_basis(bset, w[:, None, :], dirs[:, k0:k1],
                       view[:, None, :], nrm[:, None, :])
        T[:, k0:k1] = f * (shading[:, k0:k1] * atten[:, k0:k1])[:, :, None]
    return T


def _check_render_inputs(scene, display, bset, weights):
    H, W = scene.mask.shape
    if weights.weights.shape[:2] != (H, W):
        raise DataError("weight maps do not match the scene resolution")
    if weights.J != bset.J:
        raise DataError(f"weight maps carry J={weights.J} but basis set has J={bset.J}")


def add_noise_clip(image, noise: NoiseModel | None, clip: bool = True,
                   stream: int = 0) -> np.ndarray:
    """Add Gaussian noise (if any) and clamp to [0, 1] (if clip)."""
    out = np.asarray(image, dtype=float)
    if noise is not None and noise.sigma > 0:
        out = out + noise.rng(stream).normal(0.0, noise.sigma, size=out.shape)
    else:
        out = out.copy()
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def render_pattern(scene: SceneMaps, display: DisplayModel, bset: BasisBrdfSet,
                   weights: WeightMaps, pattern: DisplayPattern,
                   falloff_params: FalloffParams = FalloffParams(),
                   noise: NoiseModel | None = None, clip: bool = True,
                   noise_stream: int = 0) -> np.ndarray:
    """Render one image under a display pattern; unmasked pixels are 0."""
    _check_render_inputs(scene, display, bset, weights)
    L = pattern_radiance(pattern, display)
    T = transport_matrix(scene, display, bset, weights, falloff_params)
    flat = np.einsum("pic,ic->pc", T, L, optimize=False)
    H, W = scene.mask.shape
    image = np.zeros((H, W, 3))
    image[scene.mask] = flat
    image = add_noise_clip(image, noise, clip=clip, stream=noise_stream)
    image[~scene.mask] = 0.0
    return image


def render_olat_stack(scene: SceneMaps, display: DisplayModel, bset: BasisBrdfSet,
                      weights: WeightMaps,
                      falloff_params: FalloffParams = FalloffParams(),
                      clip: bool = False) -> OlatStack:
    """Transport stack: image i is rendered with unit radiance at superpixel i.

    Backlight and the display response do not enter; stacks are stored
    unclipped by default so relighting can clip once after combination.
    """
    _check_render_inputs(scene, display, bset, weights)
    T = transport_matrix(scene, display, bset, weights, falloff_params)
    N = display.n_superpixels
    H, W = scene.mask.shape
    images = np.zeros((N, H, W, 3))
    images[:, scene.mask, :] = np.transpose(T, (1, 0, 2))
    if clip:
        np.clip(images, 0.0, 1.0, out=images)
    return OlatStack(images=images, clipped_flags=np.full(N, bool(clip)))


def relight(stack: OlatStack, pattern: DisplayPattern, display: DisplayModel,
            noise: NoiseModel | None = None, clip: bool = True,
            noise_stream: int = 0) -> np.ndarray:
    """Combine the OLAT stack under a pattern: clip(sum_i I_i L_i + eps)."""
    if len(stack) != display.n_superpixels:
        raise DataError(
            f"stack length {len(stack)} != display N = {display.n_superpixels}"
        )
    L = pattern_radiance(pattern, display)
    image = np.einsum("nhwc,nc->hwc", stack.images, L, optimize=False)
    return add_noise_clip(image, noise, clip=clip, stream=noise_stream)


def save_olat_stack(directory, stack: OlatStack, display: DisplayModel | None = None,
                    display_ref: str | None = None) -> None:
    """Persist a stack as olat_XXX.pfm files plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    N = len(stack)
    for i in range(N):
        write_pfm(os.path.join(directory, f"olat_{i:03d}.pfm"), stack.images[i])
    doc = {
        "n": N,
        "grid": list(display.grid_shape) if display is not None else None,
        "clipped_flags": stack.clipped_flags.tolist(),
        "display": display_ref,
    }
    with open(os.path.join(directory, "olat_manifest.json"), "w") as fp:
        json.dump(doc, fp, indent=1)


def load_olat_stack(directory) -> OlatStack:
    path = os.path.join(directory, "olat_manifest.json")
    try:
        with open(path) as fp:
            doc = json.load(fp)
    except FileNotFoundError as exc:
        raise DataError(f"missing OLAT manifest {path}") from exc
    N = int(doc["n"])
    images = np.stack([
        read_pfm(os.path.join(directory, f"olat_{i:03d}.pfm")) for i in range(N)
    ])
    if images.ndim == 3:  # grayscale stacks are promoted to RGB
        images = np.repeat(images[..., None], 3, axis=-1)
    return OlatStack(images=images, clipped_flags=np.asarray(doc["clipped_flags"]))
