"""Command-line surface for synthesis, calibration, solving, and reports.

Every command takes ``--out`` and writes a run manifest there first with
status "running", flipping it to "ok" on success so interrupted runs are
visible from their artifacts.  Reports pair figures (PNG) with delimited
output (CSV/JSON) in the same directory.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .brdf import BasisBrdfSet, WeightMaps, load_bases, save_bases
from .calibrate import (fit_backlight, fit_falloff, fit_radiometric,
                        load_falloff_csv, load_radiometric_csv)
from .errors import DataError, NumericalError
from .geometry import CameraModel, DisplayModel, SceneMaps, load_models, save_models, synth_display
from .manifest import Manifest, load_manifest, save_manifest, write_run_manifest
from .metrics import angular_coverage, normal_mae, psnr, ssim
from .patterns import load_pattern, make_pattern, olat_split, save_pattern
from .pfm import read_pfm, write_pfm
from .photometric import nearfield_ps, woodham_ps
from .polarization import dolp, load_polarized_capture, separate, stokes_decompose
from .render import (DisplayPattern, FalloffParams, NoiseModel, OlatStack,
                     falloff, load_olat_stack, pattern_radiance, relight,
                     render_olat_stack, render_pattern, save_olat_stack)
from .solver import SolveConfig, SolveResult, load_estimate, save_estimate, solve
from .synthetic import synth_scene
from . import report

SATURATION_LEVEL = 0.98


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_resolution(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"resolution must look like 128x128, got {text!r}")


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _write_json(path, doc) -> None:
    with open(path, "w") as fp:
        json.dump(_jsonable(doc), fp, indent=1, sort_keys=True)
        fp.write("\n")


def _load_scene(man: Manifest):
    """Camera, display, and scene maps referenced by a manifest."""
    camera, display = load_models(man.resolve(man.camera))
    for key in ("depth", "normal", "mask"):
        if key not in man.scene:
            raise DataError(f"manifest lacks scene map {key!r}")
    depth = read_pfm(man.resolve(man.scene["depth"]))
    normal = read_pfm(man.resolve(man.scene["normal"]))
    mask = read_pfm(man.resolve(man.scene["mask"])) > 0.5
    scene = SceneMaps.from_depth_normal(camera, depth, normal, mask)
    return camera, display, scene


def _load_gt_materials(man: Manifest):
    if "bases" not in man.scene or "weights" not in man.scene:
        raise DataError("manifest has no ground-truth materials "
                        "(scene.bases / scene.weights)")
    bset = load_bases(man.resolve(man.scene["bases"]))
    planes = [read_pfm(man.resolve(p)) for p in man.scene["weights"]]
    return bset, WeightMaps(np.stack(planes, axis=-1))


def _load_captures(man: Manifest, indices=None):
    """Images, patterns, and clip flags for the selected capture entries."""
    if indices is None:
        indices = range(len(man.captures))
    images, patterns, clipped = [], [], []
    for i in indices:
        cap = man.captures[i]
        if cap.get("polarized"):
            raise DataError(f"capture {i} is polarized; this command takes "
                            "plain intensity captures")
        img = read_pfm(man.resolve(cap["image"]))
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=-1)
        images.append(img)
        if not cap.get("pattern"):
            raise DataError(f"capture {i} has no pattern reference")
        patterns.append(load_pattern(man.resolve(cap["pattern"])))
        clipped.append(bool(cap.get("clipped", False)))
    if not images:
        raise DataError("manifest has no usable captures")
    return np.stack(images), patterns, clipped


def _with_uniform_depth(scene: SceneMaps, camera: CameraModel,
                        uniform_depth) -> SceneMaps:
    if uniform_depth is None:
        return scene
    if uniform_depth <= 0:
        raise DataError(f"--uniform-depth must be positive, got {uniform_depth}")
    depth = np.where(scene.mask, float(uniform_depth), 0.0)
    return SceneMaps.from_depth_normal(camera, depth, scene.normal, scene.mask)


def _resolve_pattern(spec: str, display: DisplayModel) -> DisplayPattern:
    if os.path.exists(spec):
        return load_pattern(spec)
    return make_pattern(spec, display)


# ---------------------------------------------------------------- commands


def _cmd_synth(args) -> None:
    out = args.out
    scene = synth_scene(args.preset, resolution=args.resolution, seed=args.seed)
    display = synth_display()
    save_models(os.path.join(out, "models.json"), scene.camera, display)
    write_pfm(os.path.join(out, "depth.pfm"), scene.scene.depth)
    write_pfm(os.path.join(out, "normal.pfm"), scene.scene.normal)
    write_pfm(os.path.join(out, "mask.pfm"), scene.scene.mask.astype(np.float32))
    save_bases(os.path.join(out, "bases.json"), scene.bases)
    weight_paths = []
    for j in range(scene.weights.J):
        rel = f"weights_{j:03d}.pfm"
        write_pfm(os.path.join(out, rel), scene.weights.weights[..., j])
        weight_paths.append(rel)
    man = Manifest(
        display="models.json",
        camera="models.json",
        scene={"depth": "depth.pfm", "normal": "normal.pfm", "mask": "mask.pfm",
               "bases": "bases.json", "weights": weight_paths},
        base_dir=out,
    )
    save_manifest(os.path.join(out, "manifest.json"), man)

    panels = [("depth (m)", scene.scene.depth, "map"),
              ("normal", scene.scene.normal, "normal"),
              ("mask", scene.scene.mask.astype(float), "map")]
    if scene.weights.J > 1:
        panels.append(("weight 0", scene.weights.weights[..., 0], "map"))
    report.save_comparison_figure(os.path.join(out, "scene.png"), panels)
    _write_json(os.path.join(out, "scene.json"), {
        "preset": args.preset,
        "resolution": list(args.resolution),
        "n_masked": int(scene.scene.mask.sum()),
        "n_bases": scene.bases.J,
        "seed": args.seed,
    })


def _cmd_render_olat(args) -> None:
    out = args.out
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    bset, weights = _load_gt_materials(man)
    stack = render_olat_stack(scene, display, bset, weights)
    save_olat_stack(os.path.join(out, "olat"), stack, display=display)

    noise = NoiseModel(args.noise_sigma, args.seed) if args.noise_sigma > 0 else None
    os.makedirs(os.path.join(out, "captures"), exist_ok=True)
    os.makedirs(os.path.join(out, "patterns"), exist_ok=True)
    N = len(stack)
    captures, rows = [], []
    for i in range(N):
        pattern = make_pattern(f"onehot:{i}", display)
        pat_rel = os.path.join("patterns", f"pattern_{i:03d}.json")
        save_pattern(os.path.join(out, pat_rel), pattern)
        img = relight(stack, pattern, display, noise=noise, clip=args.clip,
                      noise_stream=i)
        img_rel = os.path.join("captures", f"capture_{i:03d}.pfm")
        write_pfm(os.path.join(out, img_rel), img)
        captures.append({"image": img_rel, "pattern": pat_rel,
                         "polarized": False, "clipped": bool(args.clip),
                         "generator": f"onehot:{i}"})
        rows.append((i, float(img[scene.mask].mean()), float(img.max()),
                     int(args.clip)))

    train, test = olat_split(N)
    man_out = Manifest(
        display=os.path.relpath(man.resolve(man.display), out),
        camera=os.path.relpath(man.resolve(man.camera), out),
        scene={k: (os.path.relpath(man.resolve(v), out) if isinstance(v, str)
                   else [os.path.relpath(man.resolve(p), out) for p in v])
               for k, v in man.scene.items()},
        captures=captures,
        split={"train": [int(i) for i in train], "test": [int(i) for i in test]},
        olat="olat",
        base_dir=out,
    )
    save_manifest(os.path.join(out, "manifest.json"), man_out)

    report.write_csv(os.path.join(out, "olat_stats.csv"),
                     ["index", "mean_masked", "max", "clipped"], rows)
    picks = sorted({0, N // 2, N - 1})
    report.save_comparison_figure(
        os.path.join(out, "olat_preview.png"),
        [(f"capture {i}", stack.images[i]) for i in picks])


def _cmd_relight(args) -> None:
    man = load_manifest(args.manifest)
    if man.olat is None:
        raise DataError("manifest has no OLAT stack; run render-olat first")
    _, display = load_models(man.resolve(man.camera))
    stack = load_olat_stack(man.resolve(man.olat))
    pattern = _resolve_pattern(args.pattern, display)
    noise = NoiseModel(args.noise_sigma, args.seed) if args.noise_sigma > 0 else None
    img = relight(stack, pattern, display, noise=noise, clip=args.clip)
    write_pfm(os.path.join(args.out, "relit.pfm"), img)
    report.save_image_figure(os.path.join(args.out, "relit.png"), img,
                             title=args.pattern)
    _write_json(os.path.join(args.out, "relight.json"), {
        "pattern": args.pattern,
        "clip": bool(args.clip),
        "mean": float(img.mean()),
        "max": float(img.max()),
    })


def _cmd_separate(args) -> None:
    directory, stem = os.path.split(args.input)
    cap = load_polarized_capture(directory or ".", stem)
    st = stokes_decompose(cap)
    diffuse, specular = separate(st)
    write_pfm(os.path.join(args.out, "diffuse.pfm"), diffuse)
    write_pfm(os.path.join(args.out, "specular.pfm"), specular)
    report.save_comparison_figure(os.path.join(args.out, "separation.png"), [
        ("total (s0)", st.s0), ("diffuse", diffuse), ("specular", specular)])
    rows = [("diffuse",) + tuple(diffuse.mean(axis=(0, 1))),
            ("specular",) + tuple(specular.mean(axis=(0, 1)))]
    report.write_csv(os.path.join(args.out, "separation.csv"),
                     ["component", "mean_r", "mean_g", "mean_b"], rows)
    _write_json(os.path.join(args.out, "separation.json"), {
        "mean_diffuse": diffuse.mean(),
        "mean_specular": specular.mean(),
        "mean_dolp": dolp(st).mean(),
        "specular_fraction": specular.sum() / max(st.s0.sum(), 1e-30),
    })


def _cmd_calibrate_radiometric(args) -> None:
    samples = load_radiometric_csv(args.csv)
    rep = fit_radiometric(samples)
    _write_json(os.path.join(args.out, "radiometric.json"), {
        "s": rep.s, "gamma": rep.gamma,
        "residual_rms": rep.residual_rms,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "ill_conditioned": rep.ill_conditioned,
    })
    xs = np.array([smp.set_value for smp in samples])
    measured = np.stack([smp.measured for smp in samples])
    fitted = np.asarray(rep.s)[None, :] * xs[:, None] ** np.asarray(rep.gamma)[None, :]
    rows = [(x,) + tuple(m) + tuple(f) for x, m, f in zip(xs, measured, fitted)]
    report.write_csv(os.path.join(args.out, "radiometric_fit.csv"),
                     ["set_value", "measured_r", "measured_g", "measured_b",
                      "fitted_r", "fitted_g", "fitted_b"], rows)
    report.save_scatter_fit_figure(os.path.join(args.out, "radiometric.png"),
                                   xs, measured, fitted, "set value",
                                   title="display response")


def _cmd_calibrate_falloff(args) -> None:
    samples = load_falloff_csv(args.csv)
    rep = fit_falloff(samples)
    p = rep.falloff
    _write_json(os.path.join(args.out, "falloff.json"), {
        "a": p.a, "b": p.b, "c": p.c,
        "residual_rms": rep.residual_rms,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "ill_conditioned": rep.ill_conditioned,
    })
    xs = np.array([smp.distance for smp in samples])
    measured = np.array([smp.value for smp in samples])
    fitted = falloff(xs, p)
    report.write_csv(os.path.join(args.out, "falloff_fit.csv"),
                     ["distance", "measured", "fitted"],
                     list(zip(xs, measured, fitted)))
    report.save_scatter_fit_figure(os.path.join(args.out, "falloff.png"),
                                   xs, measured, fitted, "distance (m)",
                                   title="distance falloff")


def _olat_captures_from_manifest(man: Manifest):
    """Captures assembled as an OLAT stack, checked to be one-hot in order."""
    images, patterns, clipped = _load_captures(man)
    for m, pat in enumerate(patterns):
        lit = np.flatnonzero(np.any(pat.values > 0, axis=1))
        if lit.size != 1 or lit[0] != m:
            raise DataError("backlight calibration expects captures lit "
                            f"one superpixel at a time in order; capture {m} "
                            "does not drive superpixel "
                            f"{m} alone")
    return OlatStack(images, np.asarray(clipped, dtype=bool))


def _cmd_calibrate_backlight(args) -> None:
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    bset, weights = _load_gt_materials(man)
    captures = _olat_captures_from_manifest(man)
    rep = fit_backlight(captures, scene, bset, weights, display,
                        fit_gamma=not args.fixed_gamma)
    _write_json(os.path.join(args.out, "backlight.json"), {
        "s": rep.s, "gamma": rep.gamma, "backlight": rep.backlight,
        "residual_rms": rep.residual_rms,
        "iterations": rep.iterations,
        "converged": rep.converged,
    })
    calibrated = display.with_radiometry(s=rep.s, gamma=rep.gamma,
                                         backlight=rep.backlight)
    save_models(os.path.join(args.out, "calibrated_models.json"),
                camera, calibrated)
    report.save_backlight_figure(os.path.join(args.out, "backlight.png"),
                                 rep.backlight, display.grid_shape)
    trace = np.asarray(rep.loss_trace)
    report.write_csv(os.path.join(args.out, "backlight_trace.csv"),
                     ["round", "loss"], list(enumerate(trace)))
    report.save_curve_figure(os.path.join(args.out, "backlight_loss.png"),
                             [("loss", np.arange(trace.size), trace)],
                             "round", "squared-error loss", logy=True)


def _far_field_lights(patterns, display: DisplayModel, scene: SceneMaps,
                      falloff_params: FalloffParams):
    """Directional reduction of each pattern at the mask centroid."""
    from .photometric import LUMINANCE

    center = scene.points[scene.mask].mean(axis=0)
    offsets = display.superpixel_positions - center
    dist = np.linalg.norm(offsets, axis=1)
    geom = offsets / dist[:, None] * falloff(dist, falloff_params)[:, None]
    dirs, strengths = [], []
    for pat in patterns:
        lum = pattern_radiance(pat, display) @ LUMINANCE
        a = geom.T @ lum
        e = np.linalg.norm(a)
        dirs.append(a / e if e > 0 else np.array([0.0, 0.0, -1.0]))
        strengths.append(e)
    return np.array(dirs), np.array(strengths)


def _cmd_ps(args) -> None:
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    scene_used = _with_uniform_depth(scene, camera, args.uniform_depth)
    images, patterns, _ = _load_captures(man)
    validity = None
    if args.exclude_saturated:
        validity = images < SATURATION_LEVEL

    if args.method == "woodham":
        dirs, strength = _far_field_lights(patterns, display, scene_used,
                                           FalloffParams())
        res = woodham_ps(images, dirs, strength, scene_used.mask,
                         validity=validity)
    else:
        res = nearfield_ps(images, patterns, display, camera, scene_used.depth,
                           mask=scene_used.mask, validity=validity)

    write_pfm(os.path.join(args.out, "normal.pfm"), res.normal)
    write_pfm(os.path.join(args.out, "pseudo_diffuse.pfm"), res.pseudo_diffuse)
    write_pfm(os.path.join(args.out, "residual.pfm"), res.residual)
    doc = {
        "method": args.method,
        "n_dropped": res.n_dropped,
        "n_solved": int(res.mask.sum()),
        "residual_rms": float(np.sqrt(np.mean(res.residual[res.mask] ** 2)))
        if res.mask.any() else 0.0,
    }
    panels = [("normal", res.normal, "normal"),
              ("pseudo diffuse", res.pseudo_diffuse),
              ("residual", res.residual, "map")]
    if "normal" in man.scene:
        gt_normal = read_pfm(man.resolve(man.scene["normal"]))
        both = scene.mask & res.mask
        doc["mae_deg"] = normal_mae(res.normal, gt_normal, both)
        err = np.degrees(np.arccos(np.clip(
            np.sum(res.normal * gt_normal, axis=-1), -1.0, 1.0)))
        panels.append(("angular error (deg)", np.where(both, err, 0.0), "map"))
    _write_json(os.path.join(args.out, "ps.json"), doc)
    report.save_comparison_figure(os.path.join(args.out, "ps.png"), panels)


def _cmd_solve(args) -> None:
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    scene_used = _with_uniform_depth(scene, camera, args.uniform_depth)
    indices = man.split.get("train") or None
    images, patterns, _ = _load_captures(man, indices)
    config = SolveConfig(J=args.J, iterations=args.iters, tv_lambda=args.tv,
                         seed=args.seed,
                         saturation_exclude=args.exclude_saturated)
    result = solve(images, patterns, display, camera, scene_used.depth,
                   scene_used.mask, config=config)
    est_dir = os.path.join(args.out, "estimate")
    save_estimate(est_dir, result)
    _write_json(os.path.join(args.out, "solve.json"), {
        "J": args.J,
        "iterations": args.iters,
        "n_train": images.shape[0],
        "uniform_depth": args.uniform_depth,
        "final_loss": float(result.loss_trace[-1]),
        "final_rmse": float(result.rmse_trace[-1]),
    })
    it = np.arange(result.loss_trace.size)
    report.save_curve_figure(
        os.path.join(args.out, "solve_loss.png"),
        [("total loss", it, result.loss_trace),
         ("data rmse", it, result.rmse_trace)],
        "iteration", "loss", logy=True)
    est = result.estimate
    panels = [("normal", est.normal, "normal")]
    for j in range(min(est.weights.J, 3)):
        panels.append((f"weight {j}", est.weights.weights[..., j], "map"))
    report.save_comparison_figure(os.path.join(args.out, "solve_maps.png"),
                                  panels)


def _cmd_evaluate(args) -> None:
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    est = load_estimate(args.estimate)
    if est.normal.shape != scene.normal.shape:
        raise DataError("estimate resolution does not match the manifest scene")
    both = scene.mask & est.mask
    mae = normal_mae(est.normal, scene.normal, both)

    test = man.split.get("test") or list(range(len(man.captures)))
    images, patterns, clipped = _load_captures(man, test)
    est_scene = SceneMaps.from_depth_normal(camera, est.depth, est.normal,
                                            est.mask)
    rendered = np.stack([
        render_pattern(est_scene, display, est.bases, est.weights, pat,
                       clip=clip)
        for pat, clip in zip(patterns, clipped)
    ])
    pix_mask = np.broadcast_to(both, rendered.shape[:3])
    psnr_db = psnr(rendered, images, mask=pix_mask,
                   saturation_exclude=args.exclude_saturated)
    rows = []
    for k, idx in enumerate(test):
        rows.append((idx,
                     psnr(rendered[k], images[k], mask=both,
                          saturation_exclude=args.exclude_saturated),
                     ssim(rendered[k], images[k])))
    ssim_mean = float(np.mean([r[2] for r in rows]))
    report.write_csv(os.path.join(args.out, "evaluate.csv"),
                     ["capture_index", "psnr_db", "ssim"], rows)
    _write_json(os.path.join(args.out, "evaluate.json"), {
        "mae_deg": mae,
        "psnr_db": psnr_db,
        "ssim": ssim_mean,
        "n_test": len(test),
        "n_pixels": int(both.sum()),
        "saturation_excluded": bool(args.exclude_saturated),
    })

    err = np.degrees(np.arccos(np.clip(
        np.sum(est.normal * scene.normal, axis=-1), -1.0, 1.0)))
    report.save_comparison_figure(os.path.join(args.out, "normals.png"), [
        ("estimate", est.normal, "normal"),
        ("reference", scene.normal, "normal"),
        ("angular error (deg)", np.where(both, err, 0.0), "map")])
    k = int(np.argmin([r[1] for r in rows]))
    report.save_comparison_figure(os.path.join(args.out, "relight_test.png"), [
        (f"captured {test[k]}", images[k]),
        ("rendered", rendered[k]),
        ("abs error", np.abs(rendered[k] - images[k]).mean(axis=-1), "map")])


def _cmd_coverage(args) -> None:
    man = load_manifest(args.manifest)
    camera, display, scene = _load_scene(man)
    cov = angular_coverage(scene, display, camera)
    counts, d_edges, h_edges = cov.histogram()
    rows = []
    for a in range(counts.shape[0]):
        for b in range(counts.shape[1]):
            rows.append((d_edges[a], h_edges[b], int(counts[a, b])))
    report.write_csv(os.path.join(args.out, "coverage.csv"),
                     ["theta_d_lo_deg", "theta_h_lo_deg", "count"], rows)
    h_deg = np.degrees(cov.theta_h)
    d_deg = np.degrees(cov.theta_d)
    _write_json(os.path.join(args.out, "coverage.json"), {
        "n_samples": int(cov.theta_h.size),
        "theta_h_deg": {"mean": h_deg.mean(), "max": h_deg.max()},
        "theta_d_deg": {"mean": d_deg.mean(), "max": d_deg.max()},
        "bin_occupancy": float((counts > 0).mean()),
    })
    report.save_coverage_figure(os.path.join(args.out, "coverage.png"),
                                counts, d_edges, h_edges)


# ---------------------------------------------------------------- wiring


def _build_parser() -> _Parser:
    parser = _Parser(prog="dcir", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("synth", _cmd_synth, "generate an analytic test scene")
    p.add_argument("--preset", required=True,
                   choices=["plane", "sphere", "two_material_sphere",
                            "step_normal"])
    p.add_argument("--resolution", type=_parse_resolution, default=(128, 128))

    p = add("render-olat", _cmd_render_olat,
            "render the OLAT stack and per-superpixel captures")
    p.add_argument("--manifest", required=True)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--clip", dest="clip", action="store_true", default=False)
    p.add_argument("--no-clip", dest="clip", action="store_false")

    p = add("relight", _cmd_relight, "combine the OLAT stack under a pattern")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pattern", required=True,
                   help="generator spec (onehot:K, uniform:V, gradient-x/y/z,"
                        " complement:SPEC) or a pattern JSON path")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--clip", dest="clip", action="store_true", default=False)
    p.add_argument("--no-clip", dest="clip", action="store_false")

    p = add("separate", _cmd_separate,
            "split a polarized capture into diffuse and specular")
    p.add_argument("--input", required=True,
                   help="path stem of a polarized capture "
                        "(directory/stem for stem_p000.pfm ...)")

    p = add("calibrate-radiometric", _cmd_calibrate_radiometric,
            "fit scale and gamma of the display response")
    p.add_argument("--csv", required=True,
                   help="columns set_value,value_r,value_g,value_b")

    p = add("calibrate-falloff", _cmd_calibrate_falloff,
            "fit the distance attenuation profile")
    p.add_argument("--csv", required=True,
                   help="columns distance,value_r,value_g,value_b")

    p = add("calibrate-backlight", _cmd_calibrate_backlight,
            "recover scale, gamma, and per-superpixel backlight from "
            "OLAT captures of a known object")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fixed-gamma", action="store_true",
                   help="keep gamma at the manifest value")

    p = add("ps", _cmd_ps, "photometric stereo baselines")
    p.add_argument("method", choices=["woodham", "nearfield"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--uniform-depth", type=float, default=None, metavar="METERS")
    p.add_argument("--exclude-saturated", action="store_true")

    p = add("solve", _cmd_solve, "inverse-rendering solve on the train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--J", type=int, default=2, help="number of basis materials")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--tv", type=float, default=1e-2,
                   help="total-variation weight")
    p.add_argument("--uniform-depth", type=float, default=None, metavar="METERS")
    p.add_argument("--exclude-saturated", action="store_true")

    p = add("evaluate", _cmd_evaluate,
            "score an estimate against the manifest ground truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--estimate", required=True,
                   help="estimate directory written by solve")
    p.add_argument("--exclude-saturated", action="store_true")

    p = add("coverage", _cmd_coverage,
            "angular coverage of the display over the scene")
    p.add_argument("--manifest", required=True)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    run_args = {k: _jsonable(v) for k, v in vars(args).items()
                if k not in ("func", "command")}
    write_run_manifest(args.out, args.command, run_args)
    try:
        args.func(args)
    except DataError as exc:
        print(f"dcir {args.command}: data error: {exc}", file=sys.stderr)
        write_run_manifest(args.out, args.command, run_args, status="data-error")
        return 2
    except NumericalError as exc:
        print(f"dcir {args.command}: numerical failure: {exc}", file=sys.stderr)
        write_run_manifest(args.out, args.command, run_args,
                           status="numerical-error")
        return 3
    except OSError as exc:
        print(f"dcir {args.command}: {exc}", file=sys.stderr)
        write_run_manifest(args.out, args.command, run_args, status="data-error")
        return 2
    write_run_manifest(args.out, args.command, run_args, status="ok")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
