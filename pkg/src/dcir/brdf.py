"""Cook-Torrance microfacet BRDF, basis mixtures, and analytic gradients.

The specular lobe is the GGX normal distribution with Schlick Fresnel
and the height-correlated Smith visibility term, applied per RGB
channel with alpha = sigma^2:

    f = rho_d + rho_s * D(h) * F(o.h) * G(i, o) / (4 (n.i)(n.o))
      = rho_d + rho_s * D(h) * F(o.h) / (2 * (ndoto*ti + ndoti*to))

with ti = sqrt(alpha^2 + (1 - alpha^2) * ndoti^2) and to likewise; the
second line folds G/(4 ndoti ndoto) into the Smith visibility
denominator.  F uses rho_s as the Fresnel amplitude, F = rho_s +
(1 - rho_s)(1 - o.h)^5, so rho_s = 0 kills the lobe entirely.

Backfacing configurations (n.i <= 0 or n.o <= 0) evaluate to the
diffuse term alone; ``backfacing`` exposes the flag per sample.

Everything here is pure and broadcasts over leading axes, so callers
can evaluate pixel-by-light grids in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SIGMA_MIN = 1e-3
_EPS = 1e-12


@dataclass(frozen=True)
class CookTorranceParams:
    """One material: RGB diffuse albedo, specular albedo, and roughness.

    Roughness below SIGMA_MIN is clamped up at construction; values
    outside (0, 1] are rejected.
    """

    rho_d: np.ndarray  # (3,) in [0, 1]
    rho_s: np.ndarray  # (3,) in [0, 1]
    sigma: np.ndarray  # (3,) in [SIGMA_MIN, 1]

    def __post_init__(self):
        rd = np.atleast_1d(np.asarray(self.rho_d, dtype=float))
        rs = np.atleast_1d(np.asarray(self.rho_s, dtype=float))
        sg = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if rd.size == 1:
            rd = np.repeat(rd, 3)
        if rs.size == 1:
            rs = np.repeat(rs, 3)
        if sg.size == 1:
            sg = np.repeat(sg, 3)
        for name, arr in (("rho_d", rd), ("rho_s", rs), ("sigma", sg)):
            if arr.shape != (3,):
                raise DataError(f"{name} must be a scalar or 3-vector, got shape {arr.shape}")
        if np.any(rd < 0) or np.any(rd > 1):
            raise DataError("rho_d components must lie in [0, 1]")
        if np.any(rs < 0) or np.any(rs > 1):
            raise DataError("rho_s components must lie in [0, 1]")
        if np.any(sg <= 0) or np.any(sg > 1):
            raise DataError("sigma components must lie in (0, 1]")
        sg = np.maximum(sg, SIGMA_MIN)
        object.__setattr__(self, "rho_d", rd)
        object.__setattr__(self, "rho_s", rs)
        object.__setattr__(self, "sigma", sg)


@dataclass(frozen=True)
class BasisBrdfSet:
    """J Cook-Torrance bases; per-basis parameters stacked as (J, 3) arrays."""

    bases: tuple

    def __post_init__(self):
        bases = tuple(self.bases)
        if len(bases) < 1:
            raise DataError("basis set needs at least one material")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "rho_d", np.stack([b.rho_d for b in bases]))
        object.__setattr__(self, "rho_s", np.stack([b.rho_s for b in bases]))
        object.__setattr__(self, "sigma", np.stack([b.sigma for b in bases]))

    @property
    def J(self) -> int:
        return len(self.bases)

    @classmethod
    def from_arrays(cls, rho_d, rho_s, sigma) -> "BasisBrdfSet":
        rho_d, rho_s, sigma = (np.atleast_2d(np.asarray(a, float)) for a in (rho_d, rho_s, sigma))
        return cls(tuple(
            CookTorranceParams(rho_d=d, rho_s=s, sigma=g)
            for d, s, g in zip(rho_d, rho_s, sigma)
        ))

    def to_dict(self) -> dict:
        return {
            "rho_d": self.rho_d.tolist(),
            "rho_s": self.rho_s.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisBrdfSet":
        return cls.from_arrays(d["rho_d"], d["rho_s"], d["sigma"])


@dataclass(frozen=True)
class WeightMaps:
    """Per-pixel mixture weights over the basis set, (H, W, J) >= 0."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 3:
            raise DataError(f"weight maps must be (H, W, J), got shape {w.shape}")
        if np.any(w < 0):
            raise DataError("weights must be nonnegative")

    @property
    def J(self) -> int:
        return self.weights.shape[2]

    def check_convex(self, mask) -> None:
        sums = self.weights[np.asarray(mask, bool)].sum(axis=-1)
        if sums.size and np.max(np.abs(sums - 1.0)) > 1e-5:
            raise DataError("masked weights must sum to 1 within 1e-5")


def backfacing(i, o, n) -> np.ndarray:
    """True where the light or view direction falls below the surface."""
    i, o, n = (np.asarray(a, float) for a in (i, o, n))
    return (np.sum(n * i, axis=-1) <= 0) | (np.sum(n * o, axis=-1) <= 0)


def _geometry_scalars(i, o, n):
    """Shared dot products: ndoti, ndoto, ndoth, o.h, and h itself."""
    h = i + o
    hn = np.linalg.norm(h, axis=-1, keepdims=True)
    h = h / np.maximum(hn, _EPS)
    ndoti = np.sum(n * i, axis=-1)
    ndoto = np.sum(n * o, axis=-1)
    ndoth = np.sum(n * h, axis=-1)
    doh = np.clip(np.sum(o * h, axis=-1), 0.0, 1.0)
    return ndoti, ndoto, ndoth, doh, h


def _spec_pieces(rho_s, alpha, ndoti, ndoto, ndoth, doh):
    """Specular term and the intermediates its derivatives reuse.

    All scalar inputs broadcast to (..., J, 3) against the (J, 3)
    parameter arrays.  Backfacing masking is the caller's job.  The
    arithmetic is fused in place because this broadcast dominates the
    render and solve loops.
    """
    e = (Ellipsis, None, None)
    ndoti, ndoto, ndoth, doh = ndoti[e], ndoto[e], ndoth[e], doh[e]
    a2 = alpha * alpha
    q = (a2 - 1.0) * (ndoth * ndoth)
    q += 1.0
    D = np.square(q)
    D *= np.pi
    np.divide(a2, D, out=D)
    pow5 = (1.0 - doh) ** 5
    F = (1.0 - rho_s) * pow5
    F += rho_s
    ti = (1.0 - a2) * (ndoti * ndoti)
    ti += a2
    np.sqrt(ti, out=ti)
    np.maximum(ti, _EPS, out=ti)
    to = (1.0 - a2) * (ndoto * ndoto)
    to += a2
    np.sqrt(to, out=to)
    np.maximum(to, _EPS, out=to)
    denom = ndoto * ti
    denom += ndoti * to
    np.maximum(denom, _EPS, out=denom)
    spec = rho_s * D
    spec *= F
    spec /= denom
    spec *= 0.5
    return {
        "spec": spec, "D": D, "F": F, "pow5": pow5, "q": q,
        "ti": ti, "to": to, "denom": denom,
        "ndoti": ndoti, "ndoto": ndoto, "ndoth": ndoth, "a2": a2,
    }


def eval_basis_components(bset: BasisBrdfSet, i, o, n) -> np.ndarray:
    """Per-basis BRDF values f_j, shape (..., J, 3); diffuse only when backfacing."""
    i, o, n = (np.asarray(a, float) for a in (i, o, n))
    ndoti, ndoto, ndoth, doh, _ = _geometry_scalars(i, o, n)
    alpha = bset.sigma ** 2
    p = _spec_pieces(bset.rho_s, alpha, ndoti, ndoto, ndoth, doh)
    front = ((ndoti > 0) & (ndoto > 0))[..., None, None]
    return bset.rho_d + np.where(front, p["spec"], 0.0)


def eval_cook_torrance(params: CookTorranceParams, i, o, n) -> np.ndarray:
    """Single-material BRDF value, shape (..., 3)."""
    comps = eval_basis_components(BasisBrdfSet((params,)), i, o, n)
    return comps[..., 0, :]


def eval_basis(bset: BasisBrdfSet, w, i, o, n) -> np.ndarray:
    """Mixture BRDF value sum_j w_j f_j, shape (..., 3).

    Raises:
        DataError: any weight is negative or the weight axis mismatches J.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != bset.J:
        raise DataError(f"weight vector length {w.shape[-1]} != J = {bset.J}")
    if np.any(w < 0):
        raise DataError("mixture weights must be nonnegative")
    comps = eval_basis_components(bset, i, o, n)
    return np.einsum("...j,...jc->...c", w, comps, optimize=False)


@dataclass(frozen=True)
class BrdfGrads:
    """Value and partial derivatives of the mixture BRDF.

    Per-channel layout: ``rho_d[..., j, c]`` is df_c/drho_d[j, c] (the
    cross-channel partials are zero), and likewise for rho_s and sigma.
    ``weights[..., j, c]`` is df_c/dw_j = f_j.  ``normal[..., c, k]`` is
    df_c/dn_k projected onto the tangent plane of n.  Fields may be
    broadcast views sharing memory with the inputs; treat them as
    read-only.
    """

    value: np.ndarray
    rho_d: np.ndarray
    rho_s: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    normal: np.ndarray


def grad_brdf(bset: BasisBrdfSet, w, i, o, n) -> BrdfGrads:
    """Analytic derivatives of eval_basis w.r.t. parameters and the normal.

    Like _spec_pieces this runs inside the solver's hot loop, so the
    assembly reuses buffers in place; the formulas match the naive
    per-term expansion exactly.
    """
    w = np.asarray(w, dtype=float)
    i, o, n = (np.asarray(a, float) for a in (i, o, n))
    if np.any(w < 0):
        raise DataError("mixture weights must be nonnegative")
    ndoti, ndoto, ndoth, doh, h = _geometry_scalars(i, o, n)
    sigma = bset.sigma
    alpha = sigma ** 2
    p = _spec_pieces(bset.rho_s, alpha, ndoti, ndoto, ndoth, doh)
    front = (ndoti > 0) & (ndoto > 0)
    frontf = front.astype(float)[..., None]  # (..., 1) channel-level mask
    frontb = frontf[..., None]  # (..., 1, 1) basis-level mask

    spec = p["spec"]
    spec *= frontb  # backfacing contributes no specular term anywhere below
    D, F, q = p["D"], p["F"], p["q"]
    ti, to, denom = p["ti"], p["to"], p["denom"]
    nI, nO, nH, a2 = p["ndoti"], p["ndoto"], p["ndoth"], p["a2"]
    wj = w[..., :, None]

    f_j = bset.rho_d + spec
    value = np.einsum("...jc,...jc->...c", np.broadcast_to(wj, f_j.shape),
                      f_j, optimize=False)

    d_rho_d = np.broadcast_to(wj, f_j.shape)
    # d spec / d rho_s: product rule through the rho_s prefactor and F
    d_rho_s = bset.rho_s * (1.0 - p["pow5"])
    d_rho_s += F
    d_rho_s *= D
    d_rho_s /= denom
    d_rho_s *= 0.5
    d_rho_s *= frontb
    d_rho_s *= wj

    # shared pieces: pi q^3 and rho_s F / (2 denom)
    q3 = np.square(q)
    q3 *= q
    q3 *= np.pi
    RF2 = bset.rho_s * F
    RF2 /= denom
    RF2 *= 0.5

    # d spec / d alpha, then chain through alpha = sigma^2
    dD_da = (-2.0 * a2) * (nH * nH)
    dD_da += q
    dD_da *= 2.0 * alpha
    dD_da /= q3
    dden_a = alpha * ((1.0 - nI * nI) * nO)
    dden_a /= ti
    dden_b = alpha * ((1.0 - nO * nO) * nI)
    dden_b /= to
    dden_a += dden_b
    dden_a *= spec
    dden_a /= denom
    d_sigma = dD_da
    d_sigma *= RF2
    d_sigma -= dden_a
    d_sigma *= 2.0 * sigma
    d_sigma *= frontb
    d_sigma *= wj

    d_w = f_j

    # normal gradient: spec depends on n only through ndoth, ndoti, ndoto
    dD_dnh = (-4.0 * a2 * (a2 - 1.0)) * nH
    dD_dnh /= q3
    dD_dnh *= RF2
    # ndoti and ndoto enter symmetrically through the shadowing denominator
    cross = (1.0 - a2) * (nI * nO)
    dni = cross / ti
    dni += to
    dni *= spec
    dni /= denom
    cross /= to
    cross += ti
    cross *= spec
    cross /= denom

    wb = np.broadcast_to(wj, f_j.shape)
    ch = np.einsum("...jc,...jc->...c", wb, dD_dnh, optimize=False)
    ch *= frontf
    ci = np.einsum("...jc,...jc->...c", wb, dni, optimize=False)
    co = np.einsum("...jc,...jc->...c", wb, cross, optimize=False)
    g = ch[..., :, None] * h[..., None, :]
    g -= ci[..., :, None] * i[..., None, :]
    g -= co[..., :, None] * o[..., None, :]
    proj = np.einsum("...ck,...k->...c", g, n, optimize=False)
    g -= proj[..., :, None] * n[..., None, :]

    return BrdfGrads(value=value, rho_d=d_rho_d, rho_s=d_rho_s, sigma=d_sigma,
                     weights=d_w, normal=g)


def save_bases(path, bset: BasisBrdfSet) -> None:
    import json

    with open(path, "w") as fp:
        json.dump(bset.to_dict(), fp, indent=1)


def load_bases(path) -> BasisBrdfSet:
    import json

    with open(path) as fp:
        doc = json.load(fp)
    try:
        return BasisBrdfSet.from_dict(doc)
    except KeyError as exc:
        raise DataError(f"basis document {path} is missing key {exc}") from exc
