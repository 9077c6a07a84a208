"""Display-model calibration from measurements.

Three fits feed the DisplayModel:

  * fit_radiometric: per-channel power law measured = s * v^gamma from
    flat-patch readings at known drive values (backlight-free patch).
  * fit_falloff: distance attenuation 1/(a + b d^2) + c from point
    measurements along the optical axis.
  * fit_backlight: global s, gamma, and the per-superpixel backlight B
    from captured OLAT images of an object with known geometry and
    reflectance.

The nonlinear fits run a small damped Gauss-Newton loop with analytic
Jacobians; fit_backlight alternates an exact scale update, a guarded
Newton step on gamma, and diagonally preconditioned descent on B so the
accepted loss never increases.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .brdf import BasisBrdfSet, WeightMaps
from .errors import DataError, NumericalError
from .geometry import DisplayModel, SceneMaps
from .render import FalloffParams, OlatStack, transport_matrix

LM_MAX_ITER = 200
LM_STEP_TOL = 1e-10


@dataclass(frozen=True)
class RadiometricSample:
    """One flat-patch reading: drive value in [0, 1] and measured RGB."""

    set_value: float
    measured: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.measured, dtype=float))
        if m.size == 1:
            m = np.repeat(m, 3)
        if m.shape != (3,):
            raise DataError(f"measured must be scalar or RGB, got shape {m.shape}")
        object.__setattr__(self, "measured", m)
        if not 0 <= self.set_value <= 1:
            raise DataError(f"set_value must lie in [0, 1], got {self.set_value}")
        if np.any(m < 0):
            raise DataError("measured intensities must be nonnegative")


@dataclass(frozen=True)
class FalloffSample:
    """One attenuation reading at a known distance."""

    distance: float
    measured: float

    def __post_init__(self):
        if self.distance <= 0:
            raise DataError(f"distance must be positive, got {self.distance}")
        if self.measured <= 0:
            raise DataError(f"measured must be positive, got {self.measured}")


@dataclass(frozen=True)
class FitReport:
    """Result of a calibration fit; fields not produced by a fit stay None."""

    residual_rms: float | np.ndarray
    iterations: int
    converged: bool
    ill_conditioned: bool = False
    s: np.ndarray | float | None = None
    gamma: np.ndarray | float | None = None
    falloff: FalloffParams | None = None
    backlight: np.ndarray | None = None
    loss_trace: np.ndarray | None = None


def lm_fit(residual_jac, x0, validate=None, max_iter=LM_MAX_ITER,
           step_tol=LM_STEP_TOL, lam0=1e-3):
    """Damped Gauss-Newton on a residual/Jacobian callback.

    Returns (x, rms, iterations, ill_conditioned).  Stops when the
    relative step or the gradient vanishes; exceeding the iteration cap
    raises NumericalError carrying the best parameters seen.
    """
    x = np.asarray(x0, dtype=float)
    r, J = residual_jac(x)
    cost = float(np.dot(r, r))
    lam = lam0
    best_x, best_cost = x.copy(), cost
    cond = 0.0
    for it in range(1, max_iter + 1):
        A = np.einsum("mi,mj->ij", J, J, optimize=False)
        g = np.einsum("mi,m->i", J, r, optimize=False)
        cond = np.linalg.cond(A)
        if np.max(np.abs(g)) < 1e-12:
            return best_x, _rms(r), it, cond > 1e10
        accepted = False
        for _ in range(25):
            damped = A + lam * np.diag(np.maximum(np.diag(A), 1e-12))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = x + step
            if validate is not None and not validate(trial):
                lam *= 10.0
                continue
            r_t, J_t = residual_jac(trial)
            cost_t = float(np.dot(r_t, r_t))
            if np.isfinite(cost_t) and cost_t <= cost:
                x, r, J, cost = trial, r_t, J_t, cost_t
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                if cost < best_cost:
                    best_x, best_cost = x.copy(), cost
                break
            lam *= 10.0
        if not accepted:
            # damping exhausted: the quadratic model cannot improve
            return best_x, _rms(r), it, cond > 1e10
        if np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol):
            return best_x, _rms(r), it, cond > 1e10
    raise NumericalError(
        f"fit did not converge within {max_iter} iterations "
        f"(best rms {np.sqrt(best_cost / max(len(r), 1)):.3e})",
        best=best_x,
    )


def _rms(r) -> float:
    return float(np.sqrt(np.mean(np.square(r)))) if len(r) else 0.0


def fit_radiometric(samples) -> FitReport:
    """Per-channel (s, gamma) of measured = s * set_value ** gamma.

    Zero drive values carry no shape information for a power law and
    are skipped.  Initialization is the log-log least-squares line,
    refined on the plain residuals.
    """
    samples = list(samples)
    v = np.array([smp.set_value for smp in samples])
    m = np.stack([smp.measured for smp in samples])
    keep = v > 0
    if len(np.unique(v[keep])) < 3:
        raise DataError("need at least 3 distinct positive set_values")
    v, m = v[keep], m[keep]

    s_out, g_out, rms_out, iters, ill = np.zeros(3), np.zeros(3), np.zeros(3), 0, False
    for c in range(3):
        mc = m[:, c]
        pos = mc > 0
        if np.count_nonzero(pos) >= 2:
            slope, intercept = np.polyfit(np.log(v[pos]), np.log(mc[pos]), 1)
            x0 = np.array([intercept, slope])  # (log s, gamma)
        else:
            x0 = np.array([0.0, 1.0])

        def residual_jac(x, mc=mc):
            model = np.exp(x[0]) * v ** x[1]
            J = np.stack([model, model * np.log(v)], axis=1)
            return model - mc, J

        x, rms, it, flag = lm_fit(residual_jac, x0)
        s_out[c], g_out[c], rms_out[c] = np.exp(x[0]), x[1], rms
        iters = max(iters, it)
        ill = ill or flag
    return FitReport(residual_rms=rms_out, iterations=iters, converged=True,
                     ill_conditioned=ill, s=s_out, gamma=g_out)


def fit_falloff(samples) -> FitReport:
    """FalloffParams (a, b, c) of measured = 1/(a + b d^2) + c."""
    samples = list(samples)
    d = np.array([smp.distance for smp in samples])
    m = np.array([smp.measured for smp in samples])
    if len(samples) < 4 or len(np.unique(d)) < 3:
        raise DataError("need at least 4 samples at 3 distinct distances")
    d2 = d * d

    def residual_jac(x):
        a, b, c = x
        denom = a + b * d2
        inv = 1.0 / denom
        J = np.stack([-inv * inv, -d2 * inv * inv, np.ones_like(d2)], axis=1)
        return inv + c - m, J

    def validate(x):
        if np.any(x[0] + x[1] * d2 <= 0):
            return False
        lo, hi = 0.2, 2.0
        return x[0] + x[1] * lo * lo > 0 and x[0] + x[1] * hi * hi > 0

    x, rms, it, ill = lm_fit(residual_jac, np.array([0.0, 1.0, 0.0]), validate=validate)
    return FitReport(residual_rms=rms, iterations=it, converged=True,
                     ill_conditioned=ill, falloff=FalloffParams(*x))


def _backlight_terms(B, gamma):
    """Powers of B and 1+B used by the OLAT backlight model and its gradient.

    B = 0 entries get zero derivative; valid for gamma > 1, which the
    optimizer maintains, and harmless otherwise because every step is
    checked against the true loss.
    """
    pos = B > 0
    u = np.where(pos, B, 1.0) ** gamma
    u = np.where(pos, u, 0.0)
    v = (1.0 + B) ** gamma
    logB = np.where(pos, np.log(np.where(pos, B, 1.0)), 0.0)
    lu = u * logB
    lv = v * np.log1p(B)
    bpow = np.where(pos, np.where(pos, B, 1.0) ** (gamma - 1.0), 0.0)
    vpow = (1.0 + B) ** (gamma - 1.0)
    return u, v, lu, lv, bpow, vpow


class _BacklightProblem:
    """Masked least squares between captured and modeled OLAT images.

    The model for capture i is R_i = s * (sum_k T_k B_k^gamma +
    T_i ((1+B_i)^gamma - B_i^gamma)); the shared backlight sum makes a
    full evaluation O(N P C) instead of O(N^2 P C).
    """

    def __init__(self, T, C, valid):
        self.T = T  # (P, N, 3)
        self.C = C  # (N, P, 3)
        self.V = valid  # (N, P, 3) bool
        self.count = int(valid.sum())
        if self.count == 0:
            raise DataError("no unsaturated pixels available for the backlight fit")
        self.Tsq = np.sum(T * T, axis=0)  # (N, 3)
        self.N = T.shape[1]

    def unit_model(self, B, gamma):
        """Model divided by s: A[i, p, c]."""
        u, v, *_ = _backlight_terms(B, gamma)
        base = np.einsum("pkc,kc->pc", self.T, u, optimize=False)
        A = base[None] + np.transpose(self.T, (1, 0, 2)) * (v - u)[:, None, :]
        return A, base, u, v

    def loss(self, s, B, gamma):
        A, *_ = self.unit_model(B, gamma)
        E = np.where(self.V, s * A - self.C, 0.0)
        return float(np.sum(E * E)) / self.count

    def best_scale(self, B, gamma):
        A, *_ = self.unit_model(B, gamma)
        num = float(np.sum(np.where(self.V, A * self.C, 0.0)))
        den = float(np.sum(np.where(self.V, A * A, 0.0)))
        if den <= 0:
            raise NumericalError("backlight model vanished on all valid pixels")
        return max(num / den, 1e-12)

    def gradients(self, s, B, gamma):
        """Loss, dL/dgamma, dL/dB, and the diagonal Gauss-Newton scale for B."""
        u, v, lu, lv, bpow, vpow = _backlight_terms(B, gamma)
        base = np.einsum("pkc,kc->pc", self.T, u, optimize=False)
        Tt = np.transpose(self.T, (1, 0, 2))  # (N, P, 3)
        A = base[None] + Tt * (v - u)[:, None, :]
        E = np.where(self.V, s * A - self.C, 0.0)
        loss = float(np.sum(E * E)) / self.count
        w = 2.0 / self.count
        Esum = np.sum(E, axis=0)  # (P, 3)
        D2 = np.sum(E * Tt, axis=1)  # (N, 3): sum_p E[i,p,c] T[p,i,c]

        base2 = np.einsum("pkc,kc->pc", self.T, lu, optimize=False)
        g_gamma = w * s * (float(np.sum(Esum * base2)) + float(np.sum(D2 * (lv - lu))))

        S1 = np.einsum("pc,pjc->jc", Esum, self.T, optimize=False)
        dB = w * s * gamma * (bpow * S1 + (vpow - bpow) * D2)
        diag = w * s * s * gamma * gamma * self.Tsq * (
            (self.N - 1) * bpow * bpow + (bpow + (vpow - bpow)) ** 2
        )
        return loss, g_gamma, dB, np.maximum(diag, 1e-30)


def fit_backlight(olat_captures: OlatStack, scene: SceneMaps, bset: BasisBrdfSet,
                  weights: WeightMaps, display: DisplayModel,
                  falloff_params: FalloffParams = FalloffParams(),
                  fit_gamma: bool = True, max_rounds: int = 200,
                  saturation_thresh: float = 0.995, tol: float = 1e-13) -> FitReport:
    """Recover (s, gamma, backlight) from OLAT captures of a known object.

    ``display`` supplies the superpixel geometry; its radiometric fields
    seed the optimization (gamma stays fixed when fit_gamma is False).
    The accepted loss sequence is non-increasing.
    """
    if len(olat_captures) != display.n_superpixels:
        raise DataError("capture count does not match the display grid")
    T = transport_matrix(scene, display, bset, weights, falloff_params)
    C = olat_captures.images[:, scene.mask, :]
    valid = C < saturation_thresh
    prob = _BacklightProblem(T, C, valid)

    gamma = float(display.gamma)
    B = np.clip(display.backlight.copy(), 0.0, 1.0)
    s = prob.best_scale(B, gamma)
    loss = prob.loss(s, B, gamma)
    trace = [loss]

    lr_g, lr_b = 1.0, 1.0
    for _ in range(max_rounds):
        prev = loss
        if fit_gamma:
            # guarded Newton on gamma: secant slope of the analytic gradient
            _, g_gam, _, _ = prob.gradients(s, B, gamma)
            h = 1e-4 * max(abs(gamma), 1.0)
            _, g_gam_h, _, _ = prob.gradients(s, B, gamma + h)
            curv = (g_gam_h - g_gam) / h
            step = -g_gam / curv if curv > 0 else -lr_g * g_gam
            for _ in range(30):
                cand = gamma + step
                if cand > 1e-2:
                    s_c = prob.best_scale(B, cand)
                    l_c = prob.loss(s_c, B, cand)
                    if l_c <= loss:
                        gamma, s, loss = cand, s_c, l_c
                        lr_g = min(lr_g * 1.5, 1e3)
                        break
                step *= 0.5
                lr_g *= 0.5

        _, _, dB, diag = prob.gradients(s, B, gamma)
        step_dir = dB / diag
        for _ in range(30):
            cand = np.clip(B - lr_b * step_dir, 0.0, 1.0)
            s_c = prob.best_scale(cand, gamma)
            l_c = prob.loss(s_c, cand, gamma)
            if l_c <= loss:
                B, s, loss = cand, s_c, l_c
                lr_b = min(lr_b * 1.2, 4.0)
                break
            lr_b *= 0.5
        trace.append(loss)
        if loss < 1e-22 or prev - loss <= tol * max(prev, 1e-30):
            break

    return FitReport(
        residual_rms=float(np.sqrt(loss)), iterations=len(trace) - 1,
        converged=True, s=float(s), gamma=float(gamma), backlight=B,
        loss_trace=np.asarray(trace),
    )


def load_radiometric_csv(path):
    """RadiometricSample list from CSV columns set_value, value_r, value_g, value_b."""
    rows = _read_csv(path, "set_value")
    return [
        RadiometricSample(set_value=row[0], measured=np.asarray(row[1:4]))
        for row in rows
    ]


def load_falloff_csv(path):
    """FalloffSample list from CSV columns distance, value_r, value_g, value_b.

    Attenuation is achromatic; the three channels are averaged.
    """
    rows = _read_csv(path, "distance")
    return [FalloffSample(distance=row[0], measured=float(np.mean(row[1:4]))) for row in rows]


def _read_csv(path, key_column):
    try:
        with open(path, newline="") as fp:
            reader = csv.DictReader(fp)
            if reader.fieldnames is None or key_column not in reader.fieldnames:
                raise DataError(f"{path} lacks required column {key_column!r}")
            rows = []
            for rec in reader:
                vals = [float(rec[key_column])]
                for col in ("value_r", "value_g", "value_b"):
                    vals.append(float(rec.get(col, rec.get("value_r", "nan"))))
                rows.append(vals)
    except FileNotFoundError as exc:
        raise DataError(f"missing CSV file {path}") from exc
    except ValueError as exc:
        raise DataError(f"non-numeric entry in {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} contains no samples")
    return rows
