"""End-to-end verification of a torus grid against a Weingarten function."""

from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np

from . import identity_verifier as iv
from . import symmetry_extractor as se
from . import two_point as tp
from .errors import NotConformalizable, WlabError
from .psi_model import check_structure
from .report import VerificationReport
from .surface_core import analyze, conformal_data, umbilic_diagnostics

QUICK_ALPHAS = (2.0,)
FULL_ALPHAS = (1.25, 2.0, 4.0)

# Documented pass thresholds (relative to the curvature scale where noted).
TOL = {
    "frame": 1e-8,  # |h(e1, e2)| / scale
    "h_consistency": 1e-9,
    "kappa_excess": 5e-3,  # kappa* <= 1 + this
    "reflection_normal": 1e-4,
    "reflection_position": 1e-12,
    "first_variation": 1e-4,  # times scale
    "fit_residual": 1e-6,
    "tangency": 1e-6,
    "lie": 1e-6,  # times max|V| * scale
    "d1_lambda": 1e-8,  # times max(1, scale^2)
    "flow_defect": 1e-6,
}


class _Stages:
    def __init__(self, enabled):
        self.enabled = enabled
        self.times = {}

    @contextmanager
    def __call__(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - start


def _failure(name, exc):
    return {"name": name, "pass": False, "error": f"{type(exc).__name__}: {exc}"}


def _guard(report, name, fn):
    """Run ``fn`` and add its result(s); library errors become failed checks."""
    try:
        out = fn()
    except WlabError as exc:
        report.add(_failure(name, exc))
        return None
    for item in out if isinstance(out, (list, tuple)) else [out]:
        report.add(item)
    return out


def grid_summary(grid):
    return {
        "n_t": grid.n_t,
        "n_th": grid.n_th,
        "provenance": grid.provenance,
        "metadata": grid.metadata,
    }


def run_verification(grid, spec, alpha_list=None, coarse=4, mode="full", timings=False, threads=None):
    """Run every check on ``grid``; returns ``(report, artifacts)``.

    ``artifacts`` carries the analyzed field, the alpha = 1 scan and the symmetry
    fit for plotting (entries are None when a stage failed).
    """
    if mode not in ("quick", "full"):
        raise ValueError("mode must be 'quick' or 'full'")
    alphas = tuple(alpha_list) if alpha_list else (QUICK_ALPHAS if mode == "quick" else FULL_ALPHAS)
    stage = _Stages(timings)
    report = VerificationReport(spec=spec.to_dict(), grid=grid_summary(grid))
    artifacts = {"field": None, "scan": None, "fit": None}

    with stage("analyze"):
        try:
            field_ = analyze(grid, spec)
        except WlabError as exc:
            try:
                field_ = analyze(grid, allow_umbilic=True)
            except WlabError:
                field_ = None
            report.add(_failure("analyze", exc))
            if field_ is not None:
                _guard(report, "weingarten", lambda: iv.weingarten_residual(field_, spec))
            return _finish(report, stage), artifacts
    artifacts["field"] = field_
    scale = field_.curvature_scale

    with stage("identities"):
        _guard(report, "weingarten", lambda: iv.weingarten_residual(field_, spec))

    with stage("structure"):
        s_max = max(1.0, 2.0 * float(np.max(field_.spread)))
        _guard(report, "structure", lambda: check_structure(spec, s_max))

    with stage("identities"):
        off = np.abs(field_.frame_components(field_.h, 1, 2))
        report.add({
            "name": "frame",
            "max_abs": float(np.max(off)),
            "h_consistency": field_.h_consistency,
            "tolerance": TOL["frame"] * scale,
            "pass": bool(np.max(off) <= TOL["frame"] * scale and field_.h_consistency <= TOL["h_consistency"]),
        })
        min_spread, winding = umbilic_diagnostics(field_)
        report.add({
            "name": "umbilic",
            "min_spread": min_spread,
            "winding": list(winding),
            "pass": bool(min_spread > 0 and tuple(winding) == (0, 0)),
        })
        _guard(report, "gradient_constraint", lambda: iv.gradient_constraint_residual(field_))
        _guard(report, "simons", lambda: iv.simons_residual(field_, spec))
        _guard(report, "codazzi", lambda: iv.codazzi_residual(field_))
        for a in alphas:
            _guard(report, f"barrier_alpha_{a:g}", lambda a=a: iv.barrier_scan(field_, spec, a))

    with stage("conformal"):
        try:
            cdata = conformal_data(grid)
        except NotConformalizable as exc:
            report.notes.append(f"conformal checks skipped: {exc}")
        else:
            _guard(report, "conformal", lambda: iv.conformal_residuals(cdata, field_, spec))

    with stage("two_point"):
        try:
            scan = tp.scan_Z(grid, field_, 1.0, coarse=coarse, polish=True, threads=threads)
        except WlabError as exc:
            report.add(_failure("two_point", exc))
            scan = None
        if scan is not None:
            artifacts["scan"] = scan
            report.add(tp.inscribed_radius_report(grid, field_, scan=scan))
            if mode == "full":
                try:
                    kappa, ktol = tp.kappa_star(grid, field_, coarse=coarse, threads=threads, initial=scan)
                    scan.kappa_star, scan.kappa_tol = kappa, ktol
                except WlabError as exc:
                    report.add(_failure("kappa_star", exc))
            doc = scan.to_dict()
            doc["pass"] = bool(scan.kappa_star is None or scan.kappa_star <= 1 + TOL["kappa_excess"])
            report.add(doc)
            try:
                rc = tp.reflection_check(grid, field_, scan)
            except WlabError as exc:
                report.add(_failure("reflection", exc))
            else:
                doc = rc.to_dict()
                doc["pass"] = bool(
                    rc.valid
                    and rc.residual_normal <= TOL["reflection_normal"]
                    and rc.residual_position <= TOL["reflection_position"]
                    and rc.first_variation <= TOL["first_variation"] * scale
                )
                report.add(doc)

    with stage("symmetry"):
        try:
            fit = se.extract_symmetry(grid, field_, spec)
        except WlabError as exc:
            report.add(_failure("symmetry", exc))
        else:
            artifacts["fit"] = fit
            vmax = float(np.max(np.linalg.norm(se.build_killing(field_, se.phi_for_field(field_, spec)), axis=-1)))
            lie_tol = TOL["lie"] * vmax * scale
            doc = fit.to_dict()
            doc["pass"] = bool(
                fit.rank2
                and fit.fit_residual <= TOL["fit_residual"]
                and fit.tangency_normal <= TOL["tangency"]
                and fit.tangency_position <= TOL["tangency"]
                and max(fit.lie_g, fit.lie_h) <= lie_tol
                and fit.d1_lambda_residual <= TOL["d1_lambda"] * max(1.0, scale**2)
                and fit.flow_defect <= TOL["flow_defect"]
            )
            doc["lie_tolerance"] = lie_tol
            report.add(doc)

    return _finish(report, stage), artifacts


def _finish(report, stage):
    if stage.enabled:
        report.timings = {k: round(v, 6) for k, v in stage.times.items()}
    return report
