"""Four-angle polarized captures, Stokes vectors, and diffuse/specular split.

Specular reflection of the display keeps its linear polarization while
diffuse reflection comes back depolarized, so the linear Stokes
components isolate the specular part:

    s0 = (I0 + I45 + I90 + I135) / 2,  s1 = I0 - I90,  s2 = I45 - I135
    specular = sqrt(s1^2 + s2^2),      diffuse = s0 - specular

The inverse model for testing is Malus's law per analyzer angle,
I_theta = diffuse/2 + specular * cos^2(theta - aolp).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .pfm import read_pfm, write_pfm

ANALYZER_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
_SUFFIXES = ("_p000", "_p045", "_p090", "_p135")


@dataclass(frozen=True)
class PolarizedCapture:
    """Linear intensities behind analyzers at 0, 45, 90, 135 degrees."""

    I0: np.ndarray
    I45: np.ndarray
    I90: np.ndarray
    I135: np.ndarray

    def __post_init__(self):
        planes = []
        for name in ("I0", "I45", "I90", "I135"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            planes.append(arr)
        shapes = {p.shape for p in planes}
        if len(shapes) != 1:
            raise DataError(f"polarized planes disagree in shape: {sorted(shapes)}")
        for name, p in zip(("I0", "I45", "I90", "I135"), planes):
            if np.any(p < 0):
                raise DataError(f"{name} contains negative intensities")

    @property
    def planes(self):
        return (self.I0, self.I45, self.I90, self.I135)


@dataclass(frozen=True)
class StokesImage:
    """Linear-polarization Stokes components (circular s3 is not captured)."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __post_init__(self):
        s0 = np.asarray(self.s0, dtype=float)
        s1 = np.asarray(self.s1, dtype=float)
        s2 = np.asarray(self.s2, dtype=float)
        for name, arr in (("s0", s0), ("s1", s1), ("s2", s2)):
            object.__setattr__(self, name, arr)
        if not (s0.shape == s1.shape == s2.shape):
            raise DataError("Stokes components disagree in shape")
        if np.any(s0 < 0):
            raise DataError("s0 must be nonnegative")


@dataclass(frozen=True)
class SeparationResult:
    """Diffuse/specular split; iterable as the (diffuse, specular) pair.

    ``clamped`` marks pixels where noise drove s0 below the polarized
    magnitude and diffuse was clamped at zero.
    """

    diffuse: np.ndarray
    specular: np.ndarray
    clamped: np.ndarray

    def __iter__(self):
        return iter((self.diffuse, self.specular))


def stokes_decompose(cap: PolarizedCapture) -> StokesImage:
    """Linear Stokes components of a four-angle capture."""
    I0, I45, I90, I135 = cap.planes
    s0 = (I0 + I45 + I90 + I135) / 2.0
    return StokesImage(s0=s0, s1=I0 - I90, s2=I45 - I135)


def separate(st: StokesImage) -> SeparationResult:
    """Split s0 into an unpolarized (diffuse) and polarized (specular) part."""
    specular = np.sqrt(st.s1 * st.s1 + st.s2 * st.s2)
    raw = st.s0 - specular
    return SeparationResult(
        diffuse=np.maximum(raw, 0.0),
        specular=specular,
        clamped=raw < 0,
    )


def simulate_polarized_capture(diffuse, specular, specular_aolp) -> PolarizedCapture:
    """Malus-law four-angle capture of a known diffuse/specular pair.

    ``specular_aolp`` (radians) is the polarization angle of the
    specular component, scalar or broadcastable per pixel.
    """
    diffuse = np.asarray(diffuse, dtype=float)
    specular = np.asarray(specular, dtype=float)
    aolp = np.asarray(specular_aolp, dtype=float)
    if np.any(diffuse < 0) or np.any(specular < 0):
        raise DataError("diffuse and specular inputs must be nonnegative")
    planes = [
        diffuse / 2.0 + specular * np.cos(theta - aolp) ** 2
        for theta in ANALYZER_ANGLES
    ]
    return PolarizedCapture(*planes)


def dolp(st: StokesImage) -> np.ndarray:
    """Degree of linear polarization, 0 where s0 = 0."""
    mag = np.sqrt(st.s1 * st.s1 + st.s2 * st.s2)
    return np.divide(mag, st.s0, out=np.zeros_like(mag), where=st.s0 > 0)


def aolp(st: StokesImage) -> np.ndarray:
    """Angle of linear polarization in radians, in (-pi/2, pi/2]."""
    return 0.5 * np.arctan2(st.s2, st.s1)


def consistency_residual(cap: PolarizedCapture) -> np.ndarray:
    """|(I0 + I90) - (I45 + I135)|; zero for ideal captures, a noise gauge otherwise."""
    return np.abs((cap.I0 + cap.I90) - (cap.I45 + cap.I135))


def save_polarized_capture(directory, cap: PolarizedCapture, stem: str = "capture") -> None:
    """Write the four planes as PFM files plus a small manifest."""
    os.makedirs(directory, exist_ok=True)
    for suffix, plane in zip(_SUFFIXES, cap.planes):
        write_pfm(os.path.join(directory, f"{stem}{suffix}.pfm"), plane)
    doc = {"stem": stem, "suffixes": list(_SUFFIXES), "angles_deg": [0, 45, 90, 135]}
    with open(os.path.join(directory, f"{stem}_polarized.json"), "w") as fp:
        json.dump(doc, fp, indent=1)


def load_polarized_capture(directory, stem: str = "capture") -> PolarizedCapture:
    planes = []
    for suffix in _SUFFIXES:
        path = os.path.join(directory, f"{stem}{suffix}.pfm")
        if not os.path.exists(path):
            raise DataError(f"missing polarized plane {path}")
        planes.append(read_pfm(path))
    return PolarizedCapture(*planes)
