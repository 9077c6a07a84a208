"""Scene geometry: cameras, display superpixel layout, and incident light.

All 3D quantities live in the reference-camera frame (the world frame is
the left camera of the rig).  The camera looks down +z with image x to
the right and y down; depth is the camera-frame z coordinate.  The panel
is modeled as a planar grid of point-light superpixels in the z = 0
plane, centered on the camera: the physical rig mounts the cameras at
the panel center, with objects standing off in front of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

# Physical panel extents in meters.  The compact preset samples the
# central 10x5 block of the large panel's superpixel grid, which matches
# the footprint of a 32-inch 16:9 monitor.
PANEL_PRESETS = {
    "55-inch": (1.21, 0.68),
    "32-inch": (1.21 * 10 / 16, 0.68 * 5 / 9),
}

DEFAULT_GRID = (16, 9)
DEFAULT_STANDOFF = 0.5


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a rigid camera-from-world pose."""

    focal_length_px: float
    principal_point: np.ndarray  # (2,) pixels
    resolution: tuple[int, int]  # (width, height)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "principal_point", np.asarray(self.principal_point, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if self.focal_length_px <= 0:
            raise DataError(f"focal length must be positive, got {self.focal_length_px}")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise DataError(f"resolution components must be >= 1, got {self.resolution}")
        R = self.rotation
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-6):
            raise DataError("camera rotation must be orthonormal")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-6):
            raise DataError("camera rotation must have determinant +1")

    def to_dict(self) -> dict:
        return {
            "focal_px": float(self.focal_length_px),
            "principal": [float(v) for v in self.principal_point],
            "resolution": [int(v) for v in self.resolution],
            "pose_r": self.rotation.tolist(),
            "pose_t": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            focal_length_px=float(d["focal_px"]),
            principal_point=np.asarray(d["principal"], dtype=float),
            resolution=(int(d["resolution"][0]), int(d["resolution"][1])),
            rotation=np.asarray(d["pose_r"], dtype=float),
            translation=np.asarray(d["pose_t"], dtype=float),
        )


def default_camera(resolution: tuple[int, int] = (128, 128)) -> CameraModel:
    """Reference camera: 30 degree horizontal field of view, identity pose."""
    w, h = resolution
    focal = (w / 2) / np.tan(np.radians(15.0))
    return CameraModel(
        focal_length_px=focal,
        principal_point=np.array([(w - 1) / 2.0, (h - 1) / 2.0]),
        resolution=(w, h),
    )


@dataclass(frozen=True)
class DisplayModel:
    """Panel light model: superpixel positions plus the pattern-to-radiance map.

    Radiance of superpixel i driven with RGB value P_i is
    ``s * (P_i + backlight_i) ** gamma`` per channel.
    """

    superpixel_positions: np.ndarray  # (N, 3) meters
    s: float
    gamma: float
    backlight: np.ndarray  # (N, 3) in [0, 1]
    grid_shape: tuple[int, int]  # (cols, rows)

    def __post_init__(self):
        pos = np.asarray(self.superpixel_positions, dtype=float)
        bl = np.asarray(self.backlight, dtype=float)
        object.__setattr__(self, "superpixel_positions", pos)
        object.__setattr__(self, "backlight", bl)
        cols, rows = self.grid_shape
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise DataError(f"superpixel positions must be (N, 3), got {pos.shape}")
        if pos.shape[0] != cols * rows:
            raise DataError(
                f"superpixel count {pos.shape[0]} does not match grid {cols}x{rows}"
            )
        if bl.shape != (pos.shape[0], 3):
            raise DataError(f"backlight must be (N, 3), got {bl.shape}")
        if np.any(bl < 0) or np.any(bl > 1):
            raise DataError("backlight components must lie in [0, 1]")
        if self.s <= 0:
            raise DataError(f"display scale s must be positive, got {self.s}")
        if self.gamma <= 0:
            raise DataError(f"display gamma must be positive, got {self.gamma}")

    @property
    def n_superpixels(self) -> int:
        return self.superpixel_positions.shape[0]

    def to_dict(self) -> dict:
        return {
            "superpixels": self.superpixel_positions.tolist(),
            "s": float(self.s),
            "gamma": float(self.gamma),
            "backlight": self.backlight.tolist(),
            "grid": [int(self.grid_shape[0]), int(self.grid_shape[1])],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DisplayModel":
        return cls(
            superpixel_positions=np.asarray(d["superpixels"], dtype=float),
            s=float(d["s"]),
            gamma=float(d["gamma"]),
            backlight=np.asarray(d["backlight"], dtype=float),
            grid_shape=(int(d["grid"][0]), int(d["grid"][1])),
        )

    def with_radiometry(self, s=None, gamma=None, backlight=None) -> "DisplayModel":
        """Copy with replaced radiometric parameters (geometry unchanged)."""
        return DisplayModel(
            superpixel_positions=self.superpixel_positions,
            s=self.s if s is None else float(s),
            gamma=self.gamma if gamma is None else float(gamma),
            backlight=self.backlight if backlight is None else np.asarray(backlight, float),
            grid_shape=self.grid_shape,
        )


@dataclass(frozen=True)
class SceneMaps:
    """Per-pixel geometry for one camera view.

    depth 0 marks invalid pixels; the mask is authoritative for every
    per-pixel reduction.  ``points`` is the backprojection of (pixel,
    depth) through the camera and is derived at construction.
    """

    depth: np.ndarray  # (H, W) meters, 0 = invalid
    normal: np.ndarray  # (H, W, 3) unit vectors on mask
    mask: np.ndarray  # (H, W) bool
    points: np.ndarray  # (H, W, 3) meters

    def __post_init__(self):
        d, n, m, p = self.depth, self.normal, self.mask, self.points
        H, W = d.shape
        if n.shape != (H, W, 3) or m.shape != (H, W) or p.shape != (H, W, 3):
            raise DataError("scene map shapes are inconsistent")
        if np.any(d[m] <= 0):
            raise DataError("masked pixels must have positive depth")
        norms = np.linalg.norm(n[m], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-5:
            raise DataError("masked normals must be unit length within 1e-5")

    @classmethod
    def from_depth_normal(cls, camera: CameraModel, depth, normal, mask) -> "SceneMaps":
        depth = np.asarray(depth, dtype=float)
        normal = np.asarray(normal, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        points = backproject(camera, depth)
        return cls(depth=depth, normal=normal, mask=mask, points=points)


@dataclass(frozen=True)
class IncidentSample:
    """Unit direction from a surface point toward a superpixel, plus range."""

    direction: np.ndarray  # (3,) unit
    distance: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise DataError("incident direction must be unit length")
        if self.distance <= 0:
            raise DataError("incident distance must be positive")


def backproject(camera: CameraModel, depth: np.ndarray) -> np.ndarray:
    """Lift a z-depth map to world-frame 3D points through the pinhole model.

    Pixels with depth 0 map to the zero point and are excluded by masks
    downstream.

    Raises:
        DataError: depth dimensions do not match the camera resolution.
    """
    depth = np.asarray(depth, dtype=float)
    w, h = camera.resolution
    if depth.shape != (h, w):
        raise DataError(
            f"depth shape {depth.shape} does not match camera resolution {(h, w)}"
        )
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    u = np.arange(w, dtype=float)[None, :]
    v = np.arange(h, dtype=float)[:, None]
    x = depth * (u - cx) / f
    y = depth * (v - cy) / f
    pts_cam = np.stack([x, y, depth], axis=-1)
    # world = R^T (cam - t) for a camera-from-world pose
    pts_world = np.einsum("ji,hwj->hwi", camera.rotation, pts_cam - camera.translation)
    pts_world[depth <= 0] = 0.0
    return pts_world


def project(camera: CameraModel, points: np.ndarray) -> np.ndarray:
    """Project world points to pixel coordinates (u, v). Inverse of backproject."""
    pts = np.asarray(points, dtype=float)
    cam = np.einsum("ij,...j->...i", camera.rotation, pts) + camera.translation
    z = cam[..., 2]
    cx, cy = camera.principal_point
    f = camera.focal_length_px
    with np.errstate(divide="ignore", invalid="ignore"):
        u = f * cam[..., 0] / z + cx
        v = f * cam[..., 1] / z + cy
    return np.stack([u, v], axis=-1)


def incident_geometry(point, superpixel_index: int, display: DisplayModel) -> IncidentSample:
    """Direction and distance from a surface point to one superpixel."""
    point = np.asarray(point, dtype=float)
    N = display.n_superpixels
    if not 0 <= superpixel_index < N:
        raise DataError(f"superpixel index {superpixel_index} out of range [0, {N})")
    if not np.all(np.isfinite(point)):
        raise DataError("surface point must be finite")
    offset = display.superpixel_positions[superpixel_index] - point
    dist = float(np.linalg.norm(offset))
    if dist < 1e-12:
        raise DataError("surface point coincides with the superpixel position")
    return IncidentSample(direction=offset / dist, distance=dist)


def incident_field(points: np.ndarray, display: DisplayModel):
    """Vectorized incident geometry for (P, 3) points against all superpixels.

    Returns:
        directions: (P, N, 3) unit vectors point -> superpixel.
        distances: (P, N) meters.
    """
    pts = np.asarray(points, dtype=float)
    offsets = display.superpixel_positions[None, :, :] - pts[:, None, :]
    dist = np.sqrt(np.einsum("pnk,pnk->pn", offsets, offsets))
    if np.any(dist < 1e-12):
        raise DataError("a surface point coincides with a superpixel position")
    dirs = offsets / dist[:, :, None]
    return dirs, dist


def synth_display(
    preset: str = "55-inch",
    grid_shape: tuple[int, int] = DEFAULT_GRID,
    standoff: float = DEFAULT_STANDOFF,
    extent: tuple[float, float] | None = None,
    s: float = 1.0,
    gamma: float = 1.0,
    backlight: np.ndarray | float = 0.0,
) -> DisplayModel:
    """Build a planar superpixel grid for a panel preset.

    The grid spans the physical panel extent in the z = 0 plane centered
    on the camera.  ``standoff`` is the nominal camera-to-object
    distance the panel is meant to illuminate (scene presets default to
    the same value); it does not move the panel, which always contains
    the camera origin.
    """
    cols, rows = grid_shape
    if cols < 1 or rows < 1:
        raise DataError(f"grid dims must be >= 1, got {grid_shape}")
    if standoff <= 0:
        raise DataError(f"standoff must be positive, got {standoff}")
    if preset == "custom":
        if extent is None:
            raise DataError("custom preset requires an explicit panel extent")
    elif preset in PANEL_PRESETS:
        extent = PANEL_PRESETS[preset]
    else:
        raise DataError(f"unknown panel preset {preset!r}")
    width, height = extent
    if width <= 0 or height <= 0:
        raise DataError(f"panel extent must be positive, got {extent}")

    cw, ch = width / cols, height / rows
    xs = -width / 2 + (np.arange(cols) + 0.5) * cw
    ys = -height / 2 + (np.arange(rows) + 0.5) * ch
    gx, gy = np.meshgrid(xs, ys)  # row-major: index n = r * cols + c
    positions = np.stack([gx.ravel(), gy.ravel(), np.zeros(cols * rows)], axis=-1)

    bl = np.asarray(backlight, dtype=float)
    if bl.ndim == 0:
        bl = np.full((cols * rows, 3), float(bl))
    return DisplayModel(
        superpixel_positions=positions,
        s=s,
        gamma=gamma,
        backlight=bl,
        grid_shape=(cols, rows),
    )


def save_models(path, camera: CameraModel, display: DisplayModel) -> None:
    """Write camera and display models to one JSON document."""
    import json

    doc = {}
    doc.update(camera.to_dict())
    doc.update(display.to_dict())
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_models(path) -> tuple[CameraModel, DisplayModel]:
    import json

    with open(path) as f:
        doc = json.load(f)
    try:
        return CameraModel.from_dict(doc), DisplayModel.from_dict(doc)
    except KeyError as exc:
        raise DataError(f"model document {path} is missing key {exc}") from exc
