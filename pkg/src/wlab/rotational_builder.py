"""Rotationally symmetric Weingarten tori in S^3.

Orbit-space model: the rotation acts on the (x1, x2) plane.  A point of S^3 is
``(sin u cos phi, sin u sin phi, cos u cos v, cos u sin v)``; the orbit space is
the hemisphere with metric ``du^2 + cos(u)^2 dv^2`` and orbit radius
``w = sin u``.  A profile is a unit-speed curve ``(u(s), v(s))`` with tangent
angle ``sigma`` (``u' = sin sigma``, ``v' = cos sigma / cos u``).  With the normal
taken as the profile normal rotated towards increasing ``u`` at ``sigma = 0``::

    lambda_orbit   = cot(u) cos(sigma)
    lambda_profile = -(geodesic curvature) = -sigma' - tan(u) cos(sigma)

so the Weingarten relation closes the system.  The signs are certified by
running :func:`wlab.surface_core.analyze` on emitted grids.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import spectral
from .errors import BandExit, ConvergenceFailure, NoRoot, NotFound, OpenProfile, StepFailure
from .psi_model import PsiSpec
from .surface_core import TorusGrid, product_grid

HALF_PI = 0.5 * math.pi


def product_equation(spec: PsiSpec, r):
    """Weingarten defect of the product torus S^1(r) x S^1(sqrt(1-r^2))."""
    u = r * math.sqrt(1 - r * r)
    return (1 - 2 * r * r) / u - spec.psi1(1 / u)


def product_radius(spec: PsiSpec, tol=1e-13, max_iter=200):
    """Radius r in (0, 1/sqrt(2)) of the product torus solving the Weingarten relation."""
    lo, hi = 1e-7, 1 / math.sqrt(2)
    flo, fhi = product_equation(spec, lo), product_equation(spec, hi)
    if flo * fhi > 0:
        raise NoRoot(
            f"no sign change of the product-torus equation on [{lo}, {hi}]: "
            f"f(lo) = {flo:+.3e}, f(hi) = {fhi:+.3e}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = product_equation(spec, mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def product_torus(spec: PsiSpec, n_t=64, n_th=64):
    r = product_radius(spec)
    meta = {"psi": spec.to_dict(), "construction": "product"}
    return r, product_grid(r, n_t, n_th, metadata=meta)


def solve_vertical_curvature(spec: PsiSpec, lambda_orbit, guess=None, tol=1e-13, max_iter=100):
    """The unique x with ``x + lambda_orbit = psi(|x - lambda_orbit|)``.

    The defect is strictly increasing in x (|psi'| < 1), so a bracketed Newton
    iteration with bisection fallback converges.
    """
    lo_val = lambda_orbit

    def defect(x):
        d = x - lo_val
        ad = abs(d)
        slope = 1 - math.copysign(spec.dpsi1(ad), d)
        return x + lo_val - spec.psi1(ad), slope

    x = spec.psi1(0.0) - lo_val if guess is None else guess
    f, df = defect(x)
    if f == 0:
        return x
    # Bracket the root.
    step = max(1.0, abs(x)) * 0.5
    a = b = x
    fa = fb = f
    for _ in range(200):
        if f < 0:
            b = b + step
            fb, _ = defect(b)
            if fb >= 0:
                a, fa = (b - step), defect(b - step)[0]
                break
        else:
            a = a - step
            fa, _ = defect(a)
            if fa <= 0:
                b, fb = (a + step), defect(a + step)[0]
                break
        step *= 2
    else:
        raise ConvergenceFailure(f"could not bracket the curvature equation for lambda_orbit = {lambda_orbit}")
    x = min(max(x, a), b)
    for _ in range(max_iter):
        f, df = defect(x)
        if f == 0:
            return x
        if f < 0:
            a = x
        else:
            b = x
        x_new = x - f / df if df > 0 else 0.5 * (a + b)
        if not a < x_new < b:
            x_new = 0.5 * (a + b)
        if abs(x_new - x) <= tol * max(1.0, abs(x)) or b - a <= tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    raise ConvergenceFailure(f"Newton iteration did not converge for lambda_orbit = {lambda_orbit}")


class _Flow:
    """Right-hand side of the reduced profile ODE; caches the last curvature solve."""

    def __init__(self, spec):
        self.spec = spec
        self._last = None

    def curvatures(self, u, sigma):
        lam_orbit = math.cos(sigma) / math.tan(u)
        try:
            lam_prof = solve_vertical_curvature(self.spec, lam_orbit, guess=self._last)
        except ConvergenceFailure as exc:
            raise StepFailure(str(exc)) from exc
        self._last = lam_prof
        return lam_prof, lam_orbit

    def __call__(self, y):
        u, _, sigma = y
        if not 0 < u < HALF_PI:
            raise BandExit(f"profile left the orbit-space band: u = {u}")
        lam_prof, _ = self.curvatures(u, sigma)
        cs = math.cos(sigma)
        return (math.sin(sigma), cs / math.cos(u), -lam_prof - math.tan(u) * cs)


def _rk4(flow, y, h):
    k1 = flow(y)
    k2 = flow([y[i] + 0.5 * h * k1[i] for i in range(3)])
    k3 = flow([y[i] + 0.5 * h * k2[i] for i in range(3)])
    k4 = flow([y[i] + h * k3[i] for i in range(3)])
    return [y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(3)]


def _locate_turning(flow, y, h, iters=80):
    """Bisection on the partial step length for the zero of sin(sigma)."""
    s0 = math.sin(y[2])
    lo, hi = 0.0, h
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if math.sin(_rk4(flow, y, mid)[2]) * s0 > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return t, _rk4(flow, y, t)


@dataclass
class ProfileCurve:
    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    lambda_profile: np.ndarray
    lambda_orbit: np.ndarray
    step: float
    spec: PsiSpec
    u_start: float
    half_period_angle: float | None = None
    half_length: float | None = None
    turning_points: list = field(default_factory=list)
    closure: tuple | None = None
    mismatch: float | None = None
    embedded_candidate: bool = False
    product: bool = False

    @property
    def du(self):
        return np.sin(self.sigma)

    @property
    def dv(self):
        return np.cos(self.sigma) / np.cos(self.u)

    @property
    def w(self):
        return np.sin(self.u)

    def weingarten_residual(self):
        lp, lo = self.lambda_profile, self.lambda_orbit
        psi = np.array([self.spec.psi1(abs(x)) for x in lp - lo])
        return float(np.max(np.abs(lp + lo - psi)))

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "u", "v", "du", "dv", "lambda_profile", "lambda_orbit"])
            for row in zip(self.s, self.u, self.v, self.du, self.dv, self.lambda_profile, self.lambda_orbit):
                writer.writerow([repr(float(x)) for x in row])


def _curve_from_states(spec, flow, s, states, step, u_start):
    states = np.asarray(states, dtype=float)
    lam = np.array([flow.curvatures(u, sg) for u, _, sg in states])
    return ProfileCurve(
        s=np.asarray(s, dtype=float), u=states[:, 0], v=states[:, 1], sigma=states[:, 2],
        lambda_profile=lam[:, 0], lambda_orbit=lam[:, 1], step=step, spec=spec, u_start=u_start,
    )


def integrate_profile(spec: PsiSpec, u_min: float, max_arclength: float, step: float = 0.005) -> ProfileCurve:
    """Integrate a profile from a turning point at ``u_min`` (tangent purely angular).

    Turning points (zeros of ``du/ds``) are located by bisection inside the step;
    ``half_period_angle`` is the longitude advance between the first two.
    """
    if not 0 < u_min < HALF_PI:
        raise BandExit(f"u_min = {u_min} outside (0, pi/2)")
    flow = _Flow(spec)
    y = [u_min, 0.0, 0.0]
    s, t_s, states = 0.0, [0.0], [list(y)]
    turning = [(0.0, u_min, 0.0)]
    n_steps = int(math.ceil(max_arclength / step - 1e-12))
    for n in range(n_steps):
        h = min(step, max_arclength - s)
        y_new = _rk4(flow, y, h)
        if n > 0 and math.sin(y[2]) * math.sin(y_new[2]) < 0:
            dt, yt = _locate_turning(flow, y, h)
            turning.append((s + dt, yt[0], yt[1]))
        y, s = y_new, s + h
        t_s.append(s)
        states.append(list(y))
    curve = _curve_from_states(spec, flow, t_s, states, step, u_min)
    curve.turning_points = turning
    if len(turning) >= 2:
        curve.half_period_angle = turning[1][2] - turning[0][2]
        curve.half_length = turning[1][0] - turning[0][0]
    return curve


def half_oscillation(spec: PsiSpec, u0: float, step: float = 0.005, max_arclength: float = 50.0):
    """``(half_length, delta_v, u_other)`` from the turning point ``u0`` to the next one."""
    if not 0 < u0 < HALF_PI:
        raise BandExit(f"u0 = {u0} outside (0, pi/2)")
    flow = _Flow(spec)
    y = [u0, 0.0, 0.0]
    s = 0.0
    n = 0
    while s < max_arclength:
        y_new = _rk4(flow, y, step)
        if n > 0 and math.sin(y[2]) * math.sin(y_new[2]) < 0:
            dt, yt = _locate_turning(flow, y, step)
            return s + dt, yt[1], yt[0]
        y, s, n = y_new, s + step, n + 1
    raise NotFound(f"no second turning point within arclength {max_arclength} (u0 = {u0})")


def equilibrium_u(spec: PsiSpec):
    """Orbit-space latitude of the product torus (fixed point of the reduced flow)."""
    return math.asin(product_radius(spec))


def _delta_v(spec, u0, step):
    return half_oscillation(spec, u0, step)[1]


def close_profile(spec: PsiSpec, p: int, q: int, bracket, step: float = 0.005, tol: float = 1e-12) -> ProfileCurve:
    """Find a turning latitude with ``delta_v = pi p / q`` and return the closed profile."""
    if q < 1 or p < 1:
        raise NotFound(f"invalid closure target (p, q) = ({p}, {q})")
    target = math.pi * p / q
    lo, hi = float(bracket[0]), float(bracket[1])
    try:
        dlo, dhi = _delta_v(spec, lo, step), _delta_v(spec, hi, step)
    except (BandExit, StepFailure, NotFound) as exc:
        raise NotFound(f"bracket endpoint not integrable: {exc}") from exc
    attained = (min(dlo, dhi), max(dlo, dhi))
    if (dlo - target) * (dhi - target) > 0:
        raise NotFound(
            f"delta_v does not reach pi*{p}/{q} = {target:.10f} on the bracket; "
            f"attained [{attained[0]:.10f}, {attained[1]:.10f}]",
            attained=attained,
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        dm = _delta_v(spec, mid, step)
        if (dm - target) * (dlo - target) > 0:
            lo, dlo = mid, dm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    u0 = 0.5 * (lo + hi)
    length, dv, _ = half_oscillation(spec, u0, step)
    m = max(8, int(round(length / step)))
    return _closed_curve(spec, u0, length, p, q, m)


def _shoot(spec, u0, length, m):
    flow = _Flow(spec)
    h = length / m
    y = [u0, 0.0, 0.0]
    states = [list(y)]
    for _ in range(m):
        y = _rk4(flow, y, h)
        states.append(list(y))
    return np.array(states)


def _closed_curve(spec, u0, length, p, q, m):
    """Mirror a half arc of ``m`` steps and repeat it ``q`` times in longitude."""
    half = _shoot(spec, u0, length, m)
    dv = half[-1, 1]
    mirror = half[-2::-1].copy()
    mirror[:, 1] = 2 * dv - mirror[:, 1]
    mirror[:, 2] = -mirror[:, 2]
    one = np.vstack([half, mirror])[:-1]  # 2m samples, one full oscillation
    reps = [one + np.array([0.0, 2 * dv * j, 0.0]) for j in range(q)]
    states = np.vstack(reps)
    h = length / m
    s = np.arange(states.shape[0]) * h
    flow = _Flow(spec)
    curve = _curve_from_states(spec, flow, s, states, h, u0)
    curve.half_period_angle = float(dv)
    curve.half_length = float(length)
    curve.closure = (p, q)
    total_v = 2 * q * dv
    end = np.array([math.cos(total_v), math.sin(total_v)])
    curve.mismatch = float(math.cos(u0) * np.linalg.norm(end - np.array([math.cos(2 * math.pi * p), 0.0])))
    curve.embedded_candidate = p == 1 and _is_simple(curve.u, curve.v)
    return curve


def _is_simple(u, v):
    """Segment sweep for self-intersections of the closed profile (polar chart at the pole)."""
    rad = HALF_PI - u
    pts = np.column_stack([rad * np.cos(v), rad * np.sin(v)])
    a, b = pts, np.roll(pts, -1, axis=0)
    n = len(pts)
    d = b - a

    def cross(x, y):
        return x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]

    ai, di = a[:, None, :], d[:, None, :]
    aj, dj = a[None, :, :], d[None, :, :]
    denom = cross(di, dj)
    diff = aj - ai
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(diff, dj) / denom
        s = cross(diff, di) / denom
    hit = (denom != 0) & (t > 1e-12) & (t < 1 - 1e-12) & (s > 1e-12) & (s < 1 - 1e-12)
    idx = np.arange(n)
    adjacent = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (np.abs(idx[:, None] - idx[None, :]) == n - 1)
    return not bool(np.any(hit & ~adjacent))


def product_profile(spec: PsiSpec) -> ProfileCurve:
    """The constant-latitude profile of the product torus, closed for every (p, q)."""
    u = equilibrium_u(spec)
    flow = _Flow(spec)
    n = 64
    length = 2 * math.pi * math.cos(u)
    s = np.arange(n) * length / n
    states = np.column_stack([np.full(n, u), s / math.cos(u), np.zeros(n)])
    curve = _curve_from_states(spec, flow, s, states, length / n, u)
    curve.product = True
    curve.closure = (1, 1)
    curve.mismatch = 0.0
    curve.embedded_candidate = True
    curve.half_length = length / 2
    curve.half_period_angle = math.pi
    return curve


def refine_closure(spec, u0, length, target, m, tol=1e-13, max_iter=30):
    """Shoot with exactly ``m`` steps per half arc so that the discrete arc closes.

    Unknowns (u0, half_length); conditions sigma_m = 0 and v_m = target.
    """
    x = np.array([u0, length], dtype=float)

    def resid(x):
        end = _shoot(spec, x[0], x[1], m)[-1]
        return np.array([end[2], end[1] - target])

    r = resid(x)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return float(x[0]), float(x[1])
        J = np.empty((2, 2))
        for k, dx in enumerate((1e-7, 1e-7)):
            xp = x.copy()
            xp[k] += dx
            J[:, k] = (resid(xp) - r) / dx
        x = x - np.linalg.solve(J, r)
        r = resid(x)
    if np.max(np.abs(r)) < 1e-11:
        return float(x[0]), float(x[1])
    raise ConvergenceFailure(f"aligned closure shooting did not converge (residual {np.max(np.abs(r)):.3e})")


def emit_grid(profile: ProfileCurve, n_t: int, n_th: int, substeps: int = 16) -> TorusGrid:
    """Rotate a closed profile into a TorusGrid (rotation in the x1-x2 plane, axis 1).

    The half arc is re-shot with ``n_t * substeps / (2 q)`` RK4 steps, so the ODE
    step shrinks with the grid and closure holds exactly at that step.
    """
    if n_t < 16 or n_th < 16:
        raise ValueError("n_t and n_th must be at least 16")
    if profile.closure is None:
        raise OpenProfile("profile is not closed; run close_profile first")
    spec = profile.spec
    meta = {"psi": spec.to_dict(), "rotation_axis": 1}
    if profile.product:
        u = np.full(n_t, profile.u_start)
        v = np.arange(n_t) * 2 * math.pi / n_t
        meta.update(construction="product-profile", u=profile.u_start, r=math.sin(profile.u_start))
        return _revolve(u, v, n_th, "product", meta)
    p, q = profile.closure
    m_half = int(math.ceil(n_t * substeps / (2 * q)))
    u0, length = refine_closure(spec, profile.u_start, profile.half_length, math.pi * p / q, m_half)
    closed = _closed_curve(spec, u0, length, p, q, m_half)
    total = closed.u.size
    if total % n_t == 0:
        every = total // n_t
        u, v = closed.u[::every], closed.v[::every]
    else:
        lin = 2 * math.pi * p * np.arange(total) / total
        u = spectral.resample_periodic(closed.u, n_t)
        v = spectral.resample_periodic(closed.v - lin, n_t) + 2 * math.pi * p * np.arange(n_t) / n_t
    meta.update(
        construction="profile", p=p, q=q, u_min=u0, half_length=length,
        delta_v=closed.half_period_angle, ode_steps_per_half_arc=m_half,
        embedded_candidate=closed.embedded_candidate,
    )
    return _revolve(u, v, n_th, "profile", meta)


def _revolve(u, v, n_th, provenance, meta):
    phi = np.arange(n_th) * 2 * math.pi / n_th
    U, P = u[:, None], phi[None, :]
    V = v[:, None]
    su, cu = np.sin(U), np.cos(U)
    pts = np.stack(np.broadcast_arrays(su * np.cos(P), su * np.sin(P), cu * np.cos(V), cu * np.sin(V)), axis=-1)
    pts = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    return TorusGrid(pts, provenance, meta)


def profile_grid(spec: PsiSpec, p: int, q: int, bracket, n_t=128, n_th=64, substeps=16, step=0.005):
    """Convenience: closure search followed by grid emission."""
    profile = close_profile(spec, p, q, bracket, step=step)
    return profile, emit_grid(profile, n_t, n_th, substeps=substeps)


def reintegrate_closure_gap(profile: ProfileCurve, step: float | None = None):
    """Integrate the closed profile directly (no mirroring) and measure the return gap."""
    p, q = profile.closure
    step = step or profile.step
    total = 2 * q * profile.half_length
    m = int(math.ceil(total / step))
    flow = _Flow(profile.spec)
    y = [profile.u_start, 0.0, 0.0]
    h = total / m
    for _ in range(m):
        y = _rk4(flow, y, h)
    dv = y[1] - 2 * math.pi * p
    return float(max(abs(y[0] - profile.u_start), abs(dv), abs(math.sin(y[2]))))


@dataclass
class ClosureScan:
    u: np.ndarray
    delta_v: np.ndarray
    candidates: list

    def to_dict(self):
        ok = np.isfinite(self.delta_v)
        rng = [float(np.min(self.delta_v[ok])), float(np.max(self.delta_v[ok]))] if ok.any() else None
        return {"delta_v_range": rng, "candidates": self.candidates}


def scan_closures(spec: PsiSpec, u_lo: float, u_hi: float, n: int = 24, q_max: int = 8, step: float = 0.005):
    """Tabulate delta_v over turning latitudes and list rational targets p/q within reach."""
    us = np.linspace(u_lo, u_hi, n)
    dvs = np.full(n, np.nan)
    for i, u0 in enumerate(us):
        try:
            dvs[i] = _delta_v(spec, float(u0), step)
        except (BandExit, StepFailure, NotFound):
            pass
    candidates = []
    ok = np.isfinite(dvs)
    if ok.any():
        lo, hi = np.min(dvs[ok]) / math.pi, np.max(dvs[ok]) / math.pi
        seen = set()
        for qq in range(1, q_max + 1):
            for pp in range(1, 2 * qq + 1):
                fr = Fraction(pp, qq)
                if fr in seen or not lo <= float(fr) <= hi:
                    continue
                seen.add(fr)
                target = math.pi * float(fr)
                for i in range(n - 1):
                    a, b = dvs[i], dvs[i + 1]
                    if np.isfinite(a) and np.isfinite(b) and (a - target) * (b - target) <= 0:
                        candidates.append({"p": fr.numerator, "q": fr.denominator, "bracket": [float(us[i]), float(us[i + 1])]})
    return ClosureScan(us, dvs, candidates)
