"""Inverse rendering: normals, basis BRDFs, and weight maps from captures.

The pipeline is the analysis-by-synthesis baseline: near-field
photometric stereo seeds the normals and a pseudo-diffuse image,
K-means on hue/saturation seeds one-hot weight maps and basis colors,
then backtracking gradient descent minimizes

    RMSE(rendered, captured) + tv_lambda * (TV(weights) + TV(normals))

over per-pixel normals (tangent-plane steps, re-normalized), the basis
parameters (clipped to their ranges), and per-pixel weight logits
(softmax keeps mixtures on the simplex).  Accepted iterations never
increase the loss.  When every pattern is one-hot and the backlight is
zero the renderer gathers single transport columns instead of mixing
the full pattern matrix, which is what makes OLAT solves cheap.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .brdf import (SIGMA_MIN, BasisBrdfSet, CookTorranceParams, WeightMaps,
                   eval_basis_components, grad_brdf)
from .errors import DataError
from .geometry import CameraModel, DisplayModel, backproject
from .pfm import read_pfm, write_pfm
from .photometric import nearfield_ps
from .render import DisplayPattern, FalloffParams, falloff, pattern_radiance

TV_EPS = 1e-6
_CHUNK = 24  # lights per gradient chunk
_DOWN = np.array([0.0, 0.0, -1.0])  # facing the camera, fallback normal


@dataclass(frozen=True)
class SolveConfig:
    """Knobs of the iterative solve; defaults are tuned on the synthetic suite."""

    J: int = 2
    iterations: int = 200
    step_reflectance: float = 1e-2
    step_normals: float = 5e-3
    step_weights: float = 2e-1
    tv_lambda: float = 1e-2
    seed: int = 0
    saturation_exclude: bool = False
    saturation_thresh: float = 0.98

    def __post_init__(self):
        if self.J < 1:
            raise DataError(f"J must be >= 1, got {self.J}")
        if self.iterations < 0:
            raise DataError(f"iterations must be >= 0, got {self.iterations}")
        if self.tv_lambda < 0:
            raise DataError(f"tv_lambda must be >= 0, got {self.tv_lambda}")


@dataclass(frozen=True)
class SceneEstimate:
    """Optimized scene: per-pixel normals/weights plus shared materials.

    Depth and mask are carried through untouched from the inputs.
    """

    normal: np.ndarray  # (H, W, 3)
    bases: BasisBrdfSet
    weights: WeightMaps
    depth: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class SolveResult:
    estimate: SceneEstimate
    loss_trace: np.ndarray  # accepted total loss, entry 0 is the init
    rmse_trace: np.ndarray


def rmse_loss(rendered, captured, validity=None) -> float:
    """Root of the mean squared difference over valid entries."""
    rendered = np.asarray(rendered, dtype=float)
    captured = np.asarray(captured, dtype=float)
    if rendered.shape != captured.shape:
        raise DataError(f"shape mismatch: {rendered.shape} vs {captured.shape}")
    diff = rendered - captured
    if validity is None:
        if diff.size == 0:
            raise DataError("RMSE over zero entries")
        return float(np.sqrt(np.mean(diff * diff)))
    validity = np.asarray(validity, dtype=bool)
    count = int(np.count_nonzero(validity))
    if count == 0:
        raise DataError("RMSE over zero valid entries")
    return float(np.sqrt(np.sum(np.where(validity, diff * diff, 0.0)) / count))


def _tv_pieces(arr, mask):
    """Masked neighbor differences and pair count for the TV terms."""
    arr = np.asarray(arr, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    mx = mask[:, 1:] & mask[:, :-1]
    my = mask[1:, :] & mask[:-1, :]
    dx = (arr[:, 1:] - arr[:, :-1]) * mx[..., None]
    dy = (arr[1:, :] - arr[:-1, :]) * my[..., None]
    n_pairs = int(np.count_nonzero(mx)) + int(np.count_nonzero(my))
    return dx, dy, mx, my, n_pairs


def tv_norm(map_, mask) -> float:
    """Mean absolute neighbor difference over masked pairs and channels.

    Smoothed as sqrt(d^2 + eps^2) - eps with eps = 1e-6, so the value of
    a constant map is exactly zero and the gradient exists everywhere.
    """
    arr = np.asarray(map_, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    dx, dy, _, _, n_pairs = _tv_pieces(arr, mask)
    if n_pairs == 0:
        return 0.0
    C = arr.shape[2]
    total = np.sum(np.sqrt(dx * dx + TV_EPS * TV_EPS) - TV_EPS)
    total += np.sum(np.sqrt(dy * dy + TV_EPS * TV_EPS) - TV_EPS)
    return float(total / (C * n_pairs))


def tv_grad(map_, mask):
    """(value, gradient) of tv_norm with the gradient shaped like the map."""
    arr = np.asarray(map_, dtype=float)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[..., None]
    dx, dy, mx, my, n_pairs = _tv_pieces(arr, mask)
    grad = np.zeros_like(arr)
    if n_pairs == 0:
        return 0.0, grad[..., 0] if squeeze else grad
    C = arr.shape[2]
    norm = 1.0 / (C * n_pairs)
    rx = np.sqrt(dx * dx + TV_EPS * TV_EPS)
    ry = np.sqrt(dy * dy + TV_EPS * TV_EPS)
    value = (np.sum(rx - TV_EPS) + np.sum(ry - TV_EPS)) * norm
    gx = dx / rx * mx[..., None] * norm
    gy = dy / ry * my[..., None] * norm
    grad[:, 1:] += gx
    grad[:, :-1] -= gx
    grad[1:, :] += gy
    grad[:-1, :] -= gy
    if squeeze:
        grad = grad[..., 0]
    return float(value), grad


def _rgb_to_hue_sat(rgb):
    """Hue/saturation of the hexcone model, embedded on the circle.

    Returns (P, 2) points (sat*cos h, sat*sin h); gray pixels land at
    the origin regardless of their meaningless hue.
    """
    rgb = np.asarray(rgb, dtype=float)
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    sat = np.divide(delta, mx, out=np.zeros_like(mx), where=mx > 0)
    safe = np.where(delta > 0, delta, 1.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    hue = np.where(
        mx == r, (g - b) / safe,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, np.mod(hue, 6.0), 0.0)
    ang = hue * (np.pi / 3.0)
    return np.stack([sat * np.cos(ang), sat * np.sin(ang)], axis=-1)


def _kmeans(X, J, rng, iters=100):
    """Seeded k-means++ plus Lloyd iterations; drops empty clusters."""
    n = len(X)
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, J):
        d2 = np.min(
            np.sum((X[:, None, :] - np.asarray(centers)[None]) ** 2, axis=-1), axis=1)
        total = float(d2.sum())
        if total <= 1e-24:
            break  # every point coincides with a center already
        centers.append(X[int(rng.choice(n, p=d2 / total))])
    centers = np.asarray(centers)

    assign = np.zeros(n, dtype=int)
    for _ in range(iters):
        d2 = np.sum((X[:, None, :] - centers[None]) ** 2, axis=-1)
        new_assign = np.argmin(d2, axis=1)
        keep = np.array([np.any(new_assign == j) for j in range(len(centers))])
        if not np.all(keep):
            centers = centers[keep]
            continue
        centers = np.stack([X[new_assign == j].mean(axis=0)
                            for j in range(len(centers))])
        if np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign

    # merge centers that collapsed onto each other
    merged, remap = [], {}
    for j, c in enumerate(centers):
        hit = next((k for k, m in enumerate(merged)
                    if np.sum((m - c) ** 2) < 1e-12), None)
        if hit is None:
            merged.append(c)
            remap[j] = len(merged) - 1
        else:
            remap[j] = hit
    assign = np.array([remap[a] for a in assign])
    return np.asarray(merged), assign


def init_clusters(pseudo_diffuse, mask, J: int, seed: int = 0):
    """One-hot weights and initial bases from hue/saturation clustering.

    Cluster centroid colors become the diffuse albedos; specular albedo
    and roughness start at 0.5.  Requests for more clusters than the
    data supports are reduced with a warning.
    """
    if J < 1:
        raise DataError(f"J must be >= 1, got {J}")
    mask = np.asarray(mask, dtype=bool)
    if not np.any(mask):
        raise DataError("cannot cluster an empty mask")
    px = np.clip(np.asarray(pseudo_diffuse, dtype=float)[mask], 0.0, None)

    if J == 1:
        assign = np.zeros(px.shape[0], dtype=int)
        J_eff = 1
    else:
        emb = _rgb_to_hue_sat(px)
        rng = np.random.default_rng([int(seed), 101])
        centers, assign = _kmeans(emb, J, rng)
        J_eff = len(centers)
        if J_eff < J:
            warnings.warn(
                f"only {J_eff} distinct clusters found, reduced from J={J}")

    H, W = mask.shape
    weights = np.full((H, W, J_eff), 1.0 / J_eff)
    onehot = np.zeros((px.shape[0], J_eff))
    onehot[np.arange(px.shape[0]), assign] = 1.0
    weights[mask] = onehot

    bases = []
    for j in range(J_eff):
        color = np.clip(px[assign == j].mean(axis=0), 0.0, 1.0)
        bases.append(CookTorranceParams(
            rho_d=color, rho_s=np.full(3, 0.5), sigma=np.full(3, 0.5)))
    return WeightMaps(weights), BasisBrdfSet(tuple(bases))


class _AdamState:
    """Per-group first/second moment accumulators for the descent direction.

    The returned direction has entries of magnitude about 1, so the
    configured step sizes bound the per-parameter move per iteration.
    """

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0

    def advance(self):
        self.t += 1

    def direction(self, name: str, g: np.ndarray) -> np.ndarray:
        m = self.m.get(name, 0.0)
        v = self.v.get(name, 0.0)
        m = self.BETA1 * m + (1.0 - self.BETA1) * g
        v = self.BETA2 * v + (1.0 - self.BETA2) * g * g
        self.m[name] = m
        self.v[name] = v
        mh = m / (1.0 - self.BETA1 ** self.t)
        vh = v / (1.0 - self.BETA2 ** self.t)
        return mh / (np.sqrt(vh) + self.EPS)


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _onehot_light(pattern: DisplayPattern):
    """Index of the single lit superpixel, or None for a general pattern."""
    lit = np.flatnonzero(np.any(pattern.values > 0, axis=1))
    return int(lit[0]) if len(lit) == 1 else None


class _Problem:
    """Fixed geometry and captured data for one solve."""

    def __init__(self, captures, patterns, display, camera, depth, mask,
                 falloff_params, saturation_exclude, saturation_thresh):
        captures = np.asarray(captures, dtype=float)
        depth = np.asarray(depth, dtype=float)
        mask = np.asarray(mask, dtype=bool) & (depth > 0)
        if captures.ndim != 4 or captures.shape[3] != 3:
            raise DataError(f"captures must be (M, H, W, 3), got {captures.shape}")
        if captures.shape[0] != len(patterns):
            raise DataError("capture and pattern counts differ")
        if not np.any(mask):
            raise DataError("solve mask is empty")
        self.mask = mask
        self.depth = depth
        self.M = captures.shape[0]

        pts = backproject(camera, depth)[mask]
        self.P = pts.shape[0]
        self.view = -pts / np.linalg.norm(pts, axis=-1, keepdims=True)

        onehots = [_onehot_light(p) for p in patterns]
        self.fast = (not np.any(display.backlight > 0)
                     and all(k is not None for k in onehots))
        if self.fast:
            self.K_idx = np.unique(np.asarray(onehots))
            col = {k: j for j, k in enumerate(self.K_idx)}
            self.cols = np.array([col[k] for k in onehots])
            self.L_lit = np.stack([
                pattern_radiance(p, display)[k]
                for p, k in zip(patterns, onehots)])  # (M, 3)
        else:
            self.K_idx = np.arange(display.n_superpixels)
            self.cols = None
            self.L_all = np.stack([pattern_radiance(p, display) for p in patterns])

        offsets = display.superpixel_positions[self.K_idx][None] - pts[:, None, :]
        dist = np.sqrt(np.sum(offsets * offsets, axis=-1))
        if np.any(dist < 1e-12):
            raise DataError("a scene point coincides with a superpixel")
        self.dirs = offsets / dist[:, :, None]  # (P, K, 3)
        self.atten = falloff(dist, falloff_params)  # (P, K)
        self.K = len(self.K_idx)

        self.C = captures[:, mask, :]  # (M, P, 3)
        if saturation_exclude:
            self.valid = self.C <= saturation_thresh
        else:
            self.valid = np.ones_like(self.C, dtype=bool)
        self.count = int(np.count_nonzero(self.valid))
        if self.count == 0:
            raise DataError("every capture entry is saturated")

    def render_from_T(self, T):
        """(M, P, 3) model images from a transport matrix."""
        if self.fast:
            return np.transpose(T[:, self.cols, :], (1, 0, 2)) * self.L_lit[:, None, :]
        out = np.empty((self.M, self.P, 3))
        for m in range(self.M):
            out[m] = np.einsum("pkc,kc->pc", T, self.L_all[m], optimize=False)
        return out

    def backprop_to_T(self, dLdI):
        """Pull a gradient on rendered images back to the transport matrix."""
        G = np.zeros((self.P, self.K, 3))
        if self.fast:
            contrib = np.transpose(dLdI * self.L_lit[:, None, :], (1, 0, 2))
            np.add.at(G, (slice(None), self.cols, slice(None)), contrib)
        else:
            for m in range(self.M):
                G += dLdI[m][:, None, :] * self.L_all[m][None]
        return G

    def transport(self, nrm, bset, w):
        """T and shading for the current estimate (values only)."""
        shading = np.maximum(
            np.sum(nrm[:, None, :] * self.dirs, axis=-1), 0.0)
        T = np.empty((self.P, self.K, 3))
        for k0 in range(0, self.K, _CHUNK):
            k1 = min(k0 + _CHUNK, self.K)
            comps = eval_basis_components(
                bset, self.dirs[:, k0:k1], self.view[:, None, :], nrm[:, None, :])
            f = np.einsum("pj,pkjc->pkc", w, comps, optimize=False)
            T[:, k0:k1] = f * (shading[:, k0:k1] * self.atten[:, k0:k1])[..., None]
        return T, shading

    def data_rmse(self, T):
        rendered = self.render_from_T(T)
        diff = np.where(self.valid, rendered - self.C, 0.0)
        return float(np.sqrt(np.sum(diff * diff) / self.count)), diff


def _scatter(mask, flat, C):
    out = np.zeros(mask.shape + (C,))
    out[mask] = flat
    return out


def solve(captures, patterns, display: DisplayModel, camera: CameraModel,
          depth, mask, config: SolveConfig = SolveConfig(),
          falloff_params: FalloffParams = FalloffParams()) -> SolveResult:
    """Run the full inverse-rendering baseline on captured/synthesized images.

    Returns the estimate together with the accepted loss trace, which is
    non-increasing by construction.
    """
    prob = _Problem(captures, patterns, display, camera, depth, mask,
                    falloff_params, config.saturation_exclude,
                    config.saturation_thresh)
    mask = prob.mask
    lam = config.tv_lambda

    validity = None
    if config.saturation_exclude:
        validity = np.asarray(captures) <= config.saturation_thresh
    ps = nearfield_ps(captures, patterns, display, camera, prob.depth,
                      falloff_params, mask, validity)
    wmaps, bset = init_clusters(ps.pseudo_diffuse, mask & ps.mask,
                                config.J, config.seed)

    nrm = np.where(ps.mask[..., None], ps.normal, _DOWN)[mask]
    w = wmaps.weights[mask]
    J = wmaps.J
    z = np.log(np.clip(w, 0.05, None))
    w = _softmax(z)
    rho_d = bset.rho_d.copy()
    rho_s = bset.rho_s.copy()
    sigma = bset.sigma.copy()

    def rebuild(rd, rs, sg):
        return BasisBrdfSet.from_arrays(
            np.clip(rd, 0.0, 1.0), np.clip(rs, 0.0, 1.0),
            np.clip(sg, SIGMA_MIN, 1.0))

    def total_loss(nrm_c, bset_c, w_c):
        T, _ = prob.transport(nrm_c, bset_c, w_c)
        rmse, _ = prob.data_rmse(T)
        loss = rmse
        if lam > 0:
            loss += lam * tv_norm(_scatter(mask, w_c, J), mask)
            loss += lam * tv_norm(_scatter(mask, nrm_c, 3), mask)
        return loss, rmse

    bset = rebuild(rho_d, rho_s, sigma)
    loss, rmse = total_loss(nrm, bset, w)
    loss_trace, rmse_trace = [loss], [rmse]
    adam = _AdamState()
    scale = 1.0

    for _ in range(config.iterations):
        # gradient pass: loss pieces and all parameter gradients in one sweep
        shading = np.maximum(np.sum(nrm[:, None, :] * prob.dirs, axis=-1), 0.0)
        T = np.empty((prob.P, prob.K, 3))
        g_rho_d = np.zeros((J, 3))
        g_rho_s = np.zeros((J, 3))
        g_sigma = np.zeros((J, 3))
        g_w = np.zeros((prob.P, J))
        g_n = np.zeros((prob.P, 3))
        chunks = []
        for k0 in range(0, prob.K, _CHUNK):
            k1 = min(k0 + _CHUNK, prob.K)
            gr = grad_brdf(bset, w[:, None, :], prob.dirs[:, k0:k1],
                           prob.view[:, None, :], nrm[:, None, :])
            chunks.append((k0, k1, gr))
            T[:, k0:k1] = gr.value * (shading[:, k0:k1] * prob.atten[:, k0:k1])[..., None]

        rmse, diff = prob.data_rmse(T)
        dLdI = diff / (prob.count * max(rmse, 1e-12))
        G_T = prob.backprop_to_T(dLdI)

        for k0, k1, gr in chunks:
            sa = (shading[:, k0:k1] * prob.atten[:, k0:k1])[..., None]
            dLdf = G_T[:, k0:k1] * sa
            g_rho_d += np.einsum("pkc,pkjc->jc", dLdf, gr.rho_d, optimize=False)
            g_rho_s += np.einsum("pkc,pkjc->jc", dLdf, gr.rho_s, optimize=False)
            g_sigma += np.einsum("pkc,pkjc->jc", dLdf, gr.sigma, optimize=False)
            g_w += np.einsum("pkc,pkjc->pj", dLdf, gr.weights, optimize=False)
            g_n += np.einsum("pkc,pkcx->px", dLdf, gr.normal, optimize=False)
            lit = (shading[:, k0:k1] > 0)[..., None]
            gs = np.sum(G_T[:, k0:k1] * gr.value * prob.atten[:, k0:k1, None]
                        * lit, axis=-1)
            g_n += np.einsum("pk,pkx->px", gs, prob.dirs[:, k0:k1], optimize=False)
        del chunks

        tv_w_val, tv_n_val = 0.0, 0.0
        if lam > 0:
            tv_w_val, tv_w_g = tv_grad(_scatter(mask, w, J), mask)
            tv_n_val, tv_n_g = tv_grad(_scatter(mask, nrm, 3), mask)
            g_w += lam * tv_w_g[mask]
            g_n += lam * tv_n_g[mask]
        loss = rmse + lam * (tv_w_val + tv_n_val)

        # softmax chain rule and tangent projection
        g_z = w * (g_w - np.sum(w * g_w, axis=-1, keepdims=True))
        g_n -= np.sum(g_n * nrm, axis=-1, keepdims=True) * nrm

        adam.advance()
        d_rho_d = adam.direction("rho_d", g_rho_d)
        d_rho_s = adam.direction("rho_s", g_rho_s)
        d_sigma = adam.direction("sigma", g_sigma)
        d_z = adam.direction("z", g_z)
        d_n = adam.direction("n", g_n)
        d_n -= np.sum(d_n * nrm, axis=-1, keepdims=True) * nrm

        accepted = False
        for _ in range(30):
            nrm_c = nrm - scale * config.step_normals * d_n
            nrm_c /= np.linalg.norm(nrm_c, axis=-1, keepdims=True)
            z_c = z - scale * config.step_weights * d_z
            w_c = _softmax(z_c)
            st = scale * config.step_reflectance
            bset_c = rebuild(rho_d - st * d_rho_d,
                             rho_s - st * d_rho_s,
                             sigma - st * d_sigma)
            loss_c, rmse_c = total_loss(nrm_c, bset_c, w_c)
            if loss_c <= loss:
                nrm, z, w, bset = nrm_c, z_c, w_c, bset_c
                rho_d, rho_s, sigma = bset.rho_d.copy(), bset.rho_s.copy(), bset.sigma.copy()
                loss, rmse = loss_c, rmse_c
                scale = min(scale * 2.0, 1.0)
                accepted = True
                break
            scale *= 0.5
        loss_trace.append(loss)
        rmse_trace.append(rmse)
        if not accepted and scale < 1e-14:
            break

    H, W = mask.shape
    normal_map = np.zeros((H, W, 3))
    normal_map[mask] = nrm
    weight_map = np.zeros((H, W, J))
    weight_map[mask] = w
    estimate = SceneEstimate(normal=normal_map, bases=bset,
                             weights=WeightMaps(weight_map),
                             depth=prob.depth, mask=mask)
    return SolveResult(estimate=estimate,
                       loss_trace=np.asarray(loss_trace),
                       rmse_trace=np.asarray(rmse_trace))


def save_estimate(directory, result: SolveResult) -> None:
    """Persist an estimate as PFM maps, bases.json, and loss_trace.csv."""
    os.makedirs(directory, exist_ok=True)
    est = result.estimate
    write_pfm(os.path.join(directory, "normal.pfm"), est.normal)
    write_pfm(os.path.join(directory, "depth.pfm"), est.depth)
    write_pfm(os.path.join(directory, "mask.pfm"), est.mask.astype(np.float32))
    for j in range(est.weights.J):
        write_pfm(os.path.join(directory, f"weights_{j:03d}.pfm"),
                  est.weights.weights[..., j])
    with open(os.path.join(directory, "bases.json"), "w") as fp:
        json.dump(est.bases.to_dict(), fp, indent=1)
    with open(os.path.join(directory, "loss_trace.csv"), "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["iteration", "loss", "rmse"])
        for i, (lo, rm) in enumerate(zip(result.loss_trace, result.rmse_trace)):
            writer.writerow([i, repr(float(lo)), repr(float(rm))])


def load_estimate(directory) -> SceneEstimate:
    try:
        normal = read_pfm(os.path.join(directory, "normal.pfm"))
        depth = read_pfm(os.path.join(directory, "depth.pfm"))
        mask = read_pfm(os.path.join(directory, "mask.pfm")) > 0.5
        with open(os.path.join(directory, "bases.json")) as fp:
            bases = BasisBrdfSet.from_dict(json.load(fp))
    except FileNotFoundError as exc:
        raise DataError(f"incomplete estimate directory {directory}: {exc}") from exc
    planes = []
    j = 0
    while os.path.exists(os.path.join(directory, f"weights_{j:03d}.pfm")):
        planes.append(read_pfm(os.path.join(directory, f"weights_{j:03d}.pfm")))
        j += 1
    if not planes:
        raise DataError(f"no weight maps found in {directory}")
    weights = WeightMaps(np.stack(planes, axis=-1).astype(float))
    return SceneEstimate(normal=normal.astype(float), bases=bases,
                         weights=weights, depth=depth.astype(float), mask=mask)
