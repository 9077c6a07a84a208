"""Analytic test scenes with exact geometry and known materials.

Normals come from the closed-form surface (not differenced from depth),
so reconstruction errors measure the algorithms rather than the data.
All presets sit near the 0.5 m working distance of the display rig and
face the reference camera at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brdf import BasisBrdfSet, CookTorranceParams, WeightMaps
from .errors import DataError
from .geometry import CameraModel, SceneMaps, default_camera
from .render import OlatStack

SPHERE_CENTER = np.array([0.0, 0.0, 0.5])
SPHERE_RADIUS = 0.05
PLANE_DEPTH = 0.5

_MATERIALS = {
    "matte_tan": CookTorranceParams(
        rho_d=np.array([0.60, 0.45, 0.30]), rho_s=np.array([0.0, 0.0, 0.0]),
        sigma=np.array([0.5, 0.5, 0.5])),
    "glossy_copper": CookTorranceParams(
        rho_d=np.array([0.55, 0.28, 0.15]), rho_s=np.array([0.50, 0.45, 0.40]),
        sigma=np.array([0.35, 0.35, 0.35])),
    "glossy_blue": CookTorranceParams(
        rho_d=np.array([0.12, 0.25, 0.50]), rho_s=np.array([0.30, 0.30, 0.35]),
        sigma=np.array([0.18, 0.18, 0.18])),
}


@dataclass(frozen=True)
class SyntheticScene:
    """Scene maps plus the ground-truth materials that generated them."""

    name: str
    scene: SceneMaps
    camera: CameraModel
    bases: BasisBrdfSet
    weights: WeightMaps
    seed: int


def _pixel_rays(camera: CameraModel):
    w, h = camera.resolution
    cx, cy = camera.principal_point
    u = (np.arange(w) - cx) / camera.focal_length_px
    v = (np.arange(h) - cy) / camera.focal_length_px
    gx, gy = np.meshgrid(u, v)
    return gx, gy


def _sphere_maps(camera, center, radius):
    """Z-depth of the near sphere intersection per pixel, plus exact normals."""
    gx, gy = _pixel_rays(camera)
    # ray p(t) = t * (gx, gy, 1); solve |p - center| = radius for t
    vv = gx * gx + gy * gy + 1.0
    vc = gx * center[0] + gy * center[1] + center[2]
    disc = vc * vc - vv * (float(center @ center) - radius * radius)
    mask = disc > 0
    t = np.zeros_like(gx)
    t[mask] = (vc[mask] - np.sqrt(disc[mask])) / vv[mask]
    mask &= t > 0
    depth = np.where(mask, t, 0.0)
    points = np.stack([gx * depth, gy * depth, depth], axis=-1)
    normal = np.zeros_like(points)
    normal[mask] = (points[mask] - center) / radius
    return depth, normal, mask


def _plane_maps(camera, depth_m):
    w, h = camera.resolution
    depth = np.full((h, w), depth_m)
    normal = np.zeros((h, w, 3))
    normal[..., 2] = -1.0
    mask = np.ones((h, w), dtype=bool)
    return depth, normal, mask


def synth_scene(preset: str, resolution=(128, 128), seed: int = 0) -> SyntheticScene:
    """Build one of the analytic presets.

    plane: fronto-parallel matte plane at 0.5 m, full mask.
    sphere: glossy sphere, radius 0.05 m at 0.5 m, exact normals.
    two_material_sphere: same geometry, binary hemisphere material split.
    step_normal: plane-depth scene whose normals step 20 degrees at midline.
    """
    w, h = resolution
    if w < 16 or h < 16:
        raise DataError(f"resolution must be at least 16x16, got {resolution}")
    camera = default_camera(resolution)

    if preset == "plane":
        depth, normal, mask = _plane_maps(camera, PLANE_DEPTH)
        bases = BasisBrdfSet((_MATERIALS["matte_tan"],))
        weights = np.ones((h, w, 1))
    elif preset == "sphere":
        depth, normal, mask = _sphere_maps(camera, SPHERE_CENTER, SPHERE_RADIUS)
        bases = BasisBrdfSet((_MATERIALS["glossy_copper"],))
        weights = np.ones((h, w, 1))
    elif preset == "two_material_sphere":
        depth, normal, mask = _sphere_maps(camera, SPHERE_CENTER, SPHERE_RADIUS)
        bases = BasisBrdfSet((_MATERIALS["glossy_copper"], _MATERIALS["glossy_blue"]))
        # hemisphere split by the world plane x = center_x (gx carries the
        # sign of the surface x coordinate since depth > 0 on the mask)
        gx, _ = _pixel_rays(camera)
        left = gx < SPHERE_CENTER[0]
        weights = np.zeros((h, w, 2))
        weights[..., 0] = np.where(left, 1.0, 0.0)
        weights[..., 1] = np.where(left, 0.0, 1.0)
    elif preset == "step_normal":
        depth, normal, mask = _plane_maps(camera, PLANE_DEPTH)
        tilt = np.radians(20.0)
        right = np.arange(w)[None, :] >= w // 2
        tilted = np.array([np.sin(tilt), 0.0, -np.cos(tilt)])
        normal = np.where(right[..., None], tilted, normal)
        bases = BasisBrdfSet((_MATERIALS["matte_tan"],))
        weights = np.ones((h, w, 1))
    else:
        raise DataError(f"unknown scene preset {preset!r}")

    scene = SceneMaps.from_depth_normal(camera, depth, normal, mask)
    return SyntheticScene(name=preset, scene=scene, camera=camera,
                          bases=bases, weights=WeightMaps(weights), seed=seed)


def scale_for_peak(stack: OlatStack, target: float = 0.8) -> float:
    """Display scale s that puts the brightest OLAT pixel at ``target``.

    With gamma = 1 and no backlight the rendered peak is s * max(stack),
    so this keeps synthetic captures inside the sensor range.
    """
    peak = float(np.max(stack.images))
    if peak <= 0:
        raise DataError("OLAT stack is identically zero")
    return target / peak
