"""Forward and inverse rendering for display-camera imaging systems.

An LCD panel acts as a grid of programmable point lights ("superpixels").
This package simulates near-field illumination from such a panel (backlight,
radiometric nonlinearity, distance falloff), separates diffuse and specular
reflection from four-angle polarized captures, calibrates the display model,
and reconstructs per-pixel normals plus basis-BRDF reflectance from images
captured or synthesized under display patterns.
"""

__version__ = "0.1.0"

import os as _os

# Thread pinning must precede the first numpy import in the process, and
# importing this package is the first thing every entry point does.
_threads = _os.environ.get("DCIR_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os

from .geometry import (
    CameraModel,
    DisplayModel,
    IncidentSample,
    SceneMaps,
    backproject,
    incident_geometry,
    project,
    synth_display,
)
from .brdf import (
    BasisBrdfSet,
    CookTorranceParams,
    WeightMaps,
    eval_basis,
    eval_cook_torrance,
    grad_brdf,
)
from .render import (
    DisplayPattern,
    FalloffParams,
    NoiseModel,
    OlatStack,
    add_noise_clip,
    display_intensity,
    falloff,
    load_olat_stack,
    relight,
    render_olat_stack,
    render_pattern,
    save_olat_stack,
    transport_matrix,
)
from .polarization import (
    PolarizedCapture,
    SeparationResult,
    StokesImage,
    separate,
    simulate_polarized_capture,
    stokes_decompose,
)
from .calibrate import (
    FalloffSample,
    FitReport,
    RadiometricSample,
    fit_backlight,
    fit_falloff,
    fit_radiometric,
)
from .photometric import PsResult, nearfield_ps, shadow_saturation_mask, woodham_ps
from .solver import (
    SceneEstimate,
    SolveConfig,
    SolveResult,
    init_clusters,
    load_estimate,
    rmse_loss,
    save_estimate,
    solve,
    tv_grad,
    tv_norm,
)
from .metrics import angular_coverage, normal_mae, psnr, ssim
from .pfm import read_pfm, write_pfm
from .synthetic import SyntheticScene, scale_for_peak, synth_scene
from .patterns import make_pattern, olat_split
from .manifest import Manifest, load_manifest, save_manifest
from .errors import DataError, DcirError, NumericalError

__all__ = [
    "CameraModel",
    "DisplayModel",
    "SceneMaps",
    "IncidentSample",
    "backproject",
    "project",
    "incident_geometry",
    "synth_display",
    "CookTorranceParams",
    "BasisBrdfSet",
    "WeightMaps",
    "eval_cook_torrance",
    "eval_basis",
    "grad_brdf",
    "DisplayPattern",
    "OlatStack",
    "FalloffParams",
    "NoiseModel",
    "display_intensity",
    "falloff",
    "render_pattern",
    "render_olat_stack",
    "relight",
    "add_noise_clip",
    "PolarizedCapture",
    "StokesImage",
    "SeparationResult",
    "stokes_decompose",
    "separate",
    "simulate_polarized_capture",
    "RadiometricSample",
    "FalloffSample",
    "FitReport",
    "fit_radiometric",
    "fit_falloff",
    "fit_backlight",
    "PsResult",
    "woodham_ps",
    "nearfield_ps",
    "shadow_saturation_mask",
    "SceneEstimate",
    "SolveConfig",
    "init_clusters",
    "solve",
    "rmse_loss",
    "tv_norm",
    "normal_mae",
    "psnr",
    "ssim",
    "angular_coverage",
    "read_pfm",
    "write_pfm",
    "SyntheticScene",
    "synth_scene",
    "load_olat_stack",
    "save_olat_stack",
    "transport_matrix",
    "SolveResult",
    "tv_grad",
    "save_estimate",
    "load_estimate",
    "scale_for_peak",
    "make_pattern",
    "olat_split",
    "Manifest",
    "load_manifest",
    "save_manifest",
    "DcirError",
    "DataError",
    "NumericalError",
]
