"""Pointwise identities and inequalities evaluated on analyzed surfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import DivisionDegeneracy, UmbilicDegeneracy
from .psi_model import beta_coeffs, eval_psi
from .surface_core import UMBILIC_THRESHOLD, CurvatureField, attach_betas


@dataclass
class ResidualSummary:
    name: str
    max_abs: float
    mean_abs: float
    argmax: tuple
    tolerance: float
    passed: bool
    resolution: tuple = ()
    trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "name": self.name,
            "max_abs": self.max_abs,
            "mean_abs": self.mean_abs,
            "argmax": list(self.argmax),
            "tolerance": self.tolerance,
            "resolution": list(self.resolution),
            "pass": self.passed,
        }
        if self.trace:
            out["trace"] = [[n, v] for n, v in self.trace]
        if self.extra:
            out["extra"] = dict(self.extra)
        return out


def summarize(name, residual, tolerance, **extra):
    """Max/mean of ``|residual|`` with a deterministic (first in C order) argmax."""
    a = np.abs(np.asarray(residual))
    idx = np.unravel_index(int(np.argmax(a)), a.shape)
    mx = float(a[idx])
    return ResidualSummary(
        name=name,
        max_abs=mx,
        mean_abs=float(a.mean()),
        argmax=tuple(int(i) for i in idx),
        tolerance=float(tolerance),
        passed=bool(mx <= tolerance),
        resolution=tuple(a.shape[:2]),
        extra=extra,
    )


def add_trace(summary, trace):
    """Attach a refinement trace [(N, max_abs), ...] with strictly increasing N."""
    ns = [n for n, _ in trace]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("refinement trace must list strictly increasing resolutions")
    summary.trace = [(int(n), float(v)) for n, v in trace]
    return summary


def refinement_trace(resolutions, measure):
    """Run ``measure(N) -> float`` for increasing ``N`` and return [(N, value), ...]."""
    ns = sorted(int(n) for n in resolutions)
    return [(n, float(measure(n))) for n in ns]


def observed_orders(trace):
    """Convergence orders log(e_k / e_{k+1}) / log(N_{k+1} / N_k)."""
    return [
        math.log(e0 / e1) / math.log(n1 / n0)
        for (n0, e0), (n1, e1) in zip(trace, trace[1:])
    ]


def _need_betas(field, spec=None):
    if field.beta1 is None:
        if spec is None:
            raise ValueError("field has no beta coefficients; analyze with a spec first")
        attach_betas(field, spec)
    return field.beta1, field.beta2


def _require_umbilic_free(field):
    m = float(np.min(field.spread))
    if m < UMBILIC_THRESHOLD:
        raise UmbilicDegeneracy(f"min(lambda1 - lambda2) = {m:.3e}")


def weingarten_residual(field: CurvatureField, spec, tol=1e-8) -> ResidualSummary:
    psi = eval_psi(spec, field.spread)[0]
    res = field.lam1 + field.lam2 - psi
    return summarize("weingarten", res, tol * max(1.0, field.curvature_scale))


def gradient_constraint_residual(field: CurvatureField, tol=1e-6, spec=None) -> ResidualSummary:
    b1, b2 = _need_betas(field, spec)
    r1 = b1 * field.dlam[(1, 1)] + b2 * field.dlam[(1, 2)]
    r2 = b1 * field.dlam[(2, 1)] + b2 * field.dlam[(2, 2)]
    res = np.maximum(np.abs(r1), np.abs(r2))
    return summarize(
        "gradient_constraint", res, tol * field.curvature_scale**2,
        k1_max=float(np.max(np.abs(r1))), k2_max=float(np.max(np.abs(r2))),
    )


def simons_terms(field: CurvatureField, spec):
    """Both sides of the Simons-type identities, term by term."""
    _require_umbilic_free(field)
    b1, b2 = _need_betas(field, spec)
    l1, l2 = field.lam1, field.lam2
    s = field.spread
    dd = eval_psi(spec, s)[2]
    D1l2, D2l1 = field.dlam[(1, 2)], field.dlam[(2, 1)]
    hess = {(i, k): field.hessian_frame(lam, i) for i in (1, 2) for k, lam in ((1, l1), (2, l2))}
    terms = {}
    for k, lam in ((1, l1), (2, l2)):
        terms[f"second_{k}"] = b1 * hess[(1, k)] + b2 * hess[(2, k)]
        terms[f"cubic_{k}"] = (b1 * (l1**2 - 1) + b2 * (l2**2 - 1)) * lam - (b1 * l1 + b2 * l2) * (lam**2 - 1)
    grad_sq = D1l2**2 + D2l1**2
    terms["gradient_1"] = 2 * b2 / s * grad_sq
    terms["gradient_2"] = -2 * b1 / s * grad_sq
    terms["psi2_1"] = dd * (b1 + b2) ** 2 / b1**2 * D1l2**2
    terms["psi2_2"] = dd * (b1 + b2) ** 2 / b2**2 * D2l1**2
    return terms


def simons_residual(field: CurvatureField, spec, tol=1e-6):
    t = simons_terms(field, spec)
    scale = field.curvature_scale
    out = []
    for k in (1, 2):
        res = t[f"second_{k}"] + t[f"cubic_{k}"] - t[f"gradient_{k}"] - t[f"psi2_{k}"]
        out.append(summarize(f"simons_{k}", res, tol * scale**3))
    return tuple(out)


def barrier_values(field: CurvatureField, spec, alpha):
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    _require_umbilic_free(field)
    b1, b2 = _need_betas(field, spec)
    l1, l2 = field.lam1, field.lam2
    phi = alpha * l1 - (alpha - 1) * l2
    gap1, gap2 = phi - l1, phi - l2
    if min(np.min(gap1), np.min(gap2)) < 1e-12:
        raise DivisionDegeneracy("Phi - lambda_i too small")
    D1, D2 = field.directional(phi, 1), field.directional(phi, 2)
    value = (
        b1 * field.hessian_frame(phi, 1) + b2 * field.hessian_frame(phi, 2)
        - 2 * (b1 / gap1 * D1**2 + b2 / gap2 * D2**2)
        + (b1 * (l1**2 - 1) + b2 * (l2**2 - 1)) * phi
        - (b1 * l1 + b2 * l2) * (phi**2 - 1)
    )
    return value, b1 * l1 + b2 * l2


def barrier_scan(field: CurvatureField, spec, alpha) -> ResidualSummary:
    """Maximum over the grid of the barrier expression for Phi = alpha l1 - (alpha-1) l2.

    Here ``max_abs`` holds the signed maximum; the check passes when it is below
    ``tolerance = -1e-10 * scale^3`` and the weighted curvature sum stays positive.
    """
    value, bl = barrier_values(field, spec, alpha)
    scale = field.curvature_scale
    margin = 1e-10 * scale**3
    idx = np.unravel_index(int(np.argmax(value)), value.shape)
    mx = float(value[idx])
    min_bl = float(np.min(bl))
    return ResidualSummary(
        name=f"barrier_alpha_{alpha:g}",
        max_abs=mx,
        mean_abs=float(np.mean(np.abs(value))),
        argmax=tuple(int(i) for i in idx),
        tolerance=-margin,
        passed=bool(mx < -margin and min_bl > 0),
        resolution=value.shape,
        extra={"alpha": float(alpha), "max_value": mx, "min_beta_lambda": min_bl},
    )


def barrier_closed_form(spec, lam1, lam2, alpha):
    """Constant-curvature value -alpha(alpha-1) (sum beta_i lambda_i) (lambda1 - lambda2)^2."""
    b1, b2 = beta_coeffs(spec, lam1 - lam2)
    return -alpha * (alpha - 1) * (b1 * lam1 + b2 * lam2) * (lam1 - lam2) ** 2


def codazzi_residual(field: CurvatureField, tol=1e-6) -> ResidualSummary:
    """Antisymmetric part of the covariant derivative of h (vanishes in space forms)."""
    d = spectral.differentiator(field.method)
    h, G = field.h, field.christoffel
    dh = np.stack([d(h, axis=0), d(h, axis=1)], axis=-3)  # dh[..., a, b, c] = d_a h_bc
    cov = dh - np.einsum("...dab,...dc->...abc", G, h) - np.einsum("...dac,...bd->...abc", G, h)
    res = cov - np.swapaxes(cov, -3, -2)
    norm = np.sqrt(np.einsum("...ab,...ab->...", field.g, field.g))
    mag = np.max(np.abs(res), axis=(-3, -2, -1)) / norm ** 1.5
    return summarize("codazzi", mag, tol * field.curvature_scale)


def conformal_residuals(cdata, field: CurvatureField | None, spec, tol=1e-6):
    """Conformal identities and the Beltrami-type equation for h_zz."""
    e2 = np.exp(2 * cdata.rho)
    l1, l2 = cdata.lam1, cdata.lam2
    scale = field.curvature_scale if field is not None else float(np.max(np.abs(np.stack([l1, l2]))))
    r_sum = cdata.h_zzb - e2 * (l1 + l2)
    r_diff = np.abs(cdata.h_zz) - e2 * (l1 - l2)
    chi = eval_psi(spec, np.abs(cdata.h_zz) / e2)[3]
    hz = cdata.h_zz
    rhs = 0.5 * chi / e2 * (
        cdata.h_zbzb * cdata.d_z(hz)
        + np.conj(cdata.h_zbzb * cdata.d_zbar(hz))
        - 4 * cdata.d_z(cdata.rho) * np.abs(hz) ** 2
    )
    r_belt = cdata.d_zbar(hz) - rhs
    emax = float(np.max(e2))
    return [
        summarize("conformal_mean", r_sum, tol * emax * scale),
        summarize("conformal_hopf", r_diff, tol * emax * scale),
        summarize("beltrami", r_belt, tol * emax * scale**2, conformality_defect=cdata.conformality_defect),
    ]
