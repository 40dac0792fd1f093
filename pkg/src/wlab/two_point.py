"""The two-point function Z over pairs of grid points.

For a field Phi = alpha l1 - (alpha - 1) l2,

    Z(x, y) = Phi(x) (1 - <F(x), F(y)>) + <nu(x), F(y)>.

Values are computed as ``0.5 Phi |d|^2 + <nu(x), d>`` with ``d = F(y) - F(x)``
and explicit component sums, so every code path produces bitwise identical
numbers and the diagonal is exactly zero.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import NoTouchingPair, NotNonnegativeAtMax
from .identity_verifier import ResidualSummary

TOUCH_TOL = 1e-6


def thread_count():
    try:
        n = int(os.environ.get("WLAB_THREADS", "0"))
    except ValueError:
        n = 0
    return max(1, n if n > 0 else min(8, os.cpu_count() or 1))


@dataclass
class PairData:
    """Flattened per-point arrays (row-major index p = i * n_th + j)."""

    n_t: int
    n_th: int
    F: np.ndarray  # (n, 4)
    nu: np.ndarray
    phi: np.ndarray
    spread: np.ndarray

    @classmethod
    def build(cls, field_, alpha):
        n_t, n_th = field_.shape
        lam1, lam2 = field_.lam1.ravel(), field_.lam2.ravel()
        phi = alpha * lam1 - (alpha - 1) * lam2
        return cls(n_t, n_th, field_.F.reshape(-1, 4), field_.nu.reshape(-1, 4), phi, lam1 - lam2)

    @property
    def n(self):
        return self.n_t * self.n_th

    def index(self, p):
        return (int(p) // self.n_th, int(p) % self.n_th)


def _z(data: PairData, xs, ys):
    """Z at index arrays ``xs`` and ``ys`` (broadcast against each other)."""
    Fx, Fy, nu = data.F[xs], data.F[ys], data.nu[xs]
    d0, d1, d2, d3 = (Fy[..., c] - Fx[..., c] for c in range(4))
    sq = d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
    lin = nu[..., 0] * d0 + nu[..., 1] * d1 + nu[..., 2] * d2 + nu[..., 3] * d3
    return 0.5 * data.phi[xs] * sq + lin


def _separation_ok(data: PairData, xs, ys, min_sep):
    if min_sep <= 0:
        return None
    it, jt = np.divmod(xs, data.n_th)
    iy, jy = np.divmod(ys, data.n_th)
    dt = np.abs(it - iy)
    dt = np.minimum(dt, data.n_t - dt)
    dj = np.abs(jt - jy)
    dj = np.minimum(dj, data.n_th - dj)
    return np.maximum(dt, dj) >= min_sep


def evaluate_Z(field_, alpha, x_idx, y_idx):
    """Z_alpha at explicit grid index pairs; ``x_idx``/``y_idx`` are (m, 2) integer arrays."""
    data = PairData.build(field_, alpha)
    x_idx, y_idx = np.atleast_2d(x_idx), np.atleast_2d(y_idx)
    xs = x_idx[:, 0] * data.n_th + x_idx[:, 1]
    ys = y_idx[:, 0] * data.n_th + y_idx[:, 1]
    return _z(data, xs, ys)


class _Best:
    """Running minimum with lexicographic (p, q) tie-break."""

    def __init__(self):
        self.value, self.p, self.q = math.inf, -1, -1

    def offer(self, value, p, q):
        if value < self.value or (value == self.value and (p, q) < (self.p, self.q)):
            self.value, self.p, self.q = float(value), int(p), int(q)

    def offer_block(self, Z, xs, ys):
        """Z has shape (len(xs), len(ys)) or matching broadcast of xs[:, None], ys."""
        if Z.size == 0:
            return
        m = np.min(Z)
        if m > self.value:
            return
        rows, cols = np.nonzero(Z == m)
        P = xs[rows] if xs.ndim == 1 else xs[rows, cols]
        Q = ys[cols] if ys.ndim == 1 else ys[rows, cols]
        k = np.lexsort((Q, P))[0]
        self.offer(m, P[k], Q[k])


def _block_min(data, xs, ys, min_sep):
    Z = _z(data, xs[:, None], ys[None, :])
    ok = _separation_ok(data, xs[:, None], ys[None, :], min_sep)
    if ok is not None:
        Z = np.where(ok, Z, np.inf)
    best = _Best()
    best.offer_block(Z, xs, ys)
    return best


def _merge(parts):
    best = _Best()
    for b in parts:
        if b.p >= 0:
            best.offer(b.value, b.p, b.q)
    return best


def _chunks(n, size):
    return [(s, min(n, s + size)) for s in range(0, n, size)]


@dataclass
class TwoPointScan:
    alpha: float
    min_value: float
    argmin: tuple
    coarse: int
    top_cells: int
    evaluations: int
    certified_cells: int = 0
    polished_min: float | None = None
    kappa_star: float | None = None
    kappa_tol: float | None = None
    min_separation: int = 0
    method: str = "coarse_to_fine"
    extra: dict = field(default_factory=dict)

    @property
    def diag_excluded(self):
        return self.min_separation > 0

    @property
    def off_diagonal(self):
        return tuple(self.argmin[0]) != tuple(self.argmin[1])

    def to_dict(self):
        out = {
            "name": f"two_point_alpha_{self.alpha:g}",
            "alpha": self.alpha,
            "min": self.min_value,
            "argmin": [list(self.argmin[0]), list(self.argmin[1])],
            "kappa_star": self.kappa_star,
            "coarse": self.coarse,
            "top_cells": self.top_cells,
            "evaluations": self.evaluations,
            "certified_cells": self.certified_cells,
            "diag_excluded": self.diag_excluded,
        }
        if self.polished_min is not None:
            out["polished_min"] = self.polished_min
        if self.kappa_tol is not None:
            out["kappa_tol"] = self.kappa_tol
        return out


def brute_force_min(field_, alpha=1.0, min_separation=0, threads=None) -> TwoPointScan:
    """Exhaustive minimum over all ordered pairs (the reference oracle)."""
    data = PairData.build(field_, alpha)
    allp = np.arange(data.n)
    rows = _chunks(data.n, max(1, 2_000_000 // data.n))
    with ThreadPoolExecutor(threads or thread_count()) as ex:
        parts = list(ex.map(lambda r: _block_min(data, allp[r[0]:r[1]], allp, min_separation), rows))
    best = _merge(parts)
    return TwoPointScan(
        alpha=float(alpha), min_value=best.value,
        argmin=(data.index(best.p), data.index(best.q)), coarse=1, top_cells=0,
        evaluations=data.n * data.n, min_separation=min_separation, method="brute_force",
    )


def _cells(n_t, n_th, k):
    """Partition of the grid into k x k index cells anchored at multiples of k."""
    at = np.arange(0, n_t, k)
    aj = np.arange(0, n_th, k)
    anchors, members = [], []
    for i0 in at:
        for j0 in aj:
            ii = np.arange(i0, min(i0 + k, n_t))
            jj = np.arange(j0, min(j0 + k, n_th))
            anchors.append(i0 * n_th + j0)
            members.append((ii[:, None] * n_th + jj[None, :]).ravel())
    width = max(len(m) for m in members)
    padded = np.array([np.pad(m, (0, width - len(m)), mode="edge") for m in members])
    return np.array(anchors), padded


def _window(data, p, k):
    i, j = divmod(int(p), data.n_th)
    ii = (i + np.arange(-k, k + 1)) % data.n_t
    jj = (j + np.arange(-k, k + 1)) % data.n_th
    return np.unique((ii[:, None] * data.n_th + jj[None, :]).ravel())


def scan_Z(grid, field_, alpha=1.0, coarse=4, top_cells=10, polish=False, min_separation=0,
           threads=None) -> TwoPointScan:
    """Global minimum of Z_alpha over all grid pairs, coarse-to-fine.

    1. Exhaustive over anchors (every ``coarse``-th index in both directions).
    2. Full-resolution search in windows of +-coarse around the ``top_cells``
       best anchor pairs.
    3. Certification: for fixed x, Z(x, .) = Phi/2 (|F(y) - C|^2 - Phi^-2) with
       C = F(x) - nu(x)/Phi, so each y-cell gets an exact lower bound from its
       radius in R^4. Every (x, cell) whose bound does not exceed the current
       minimum is evaluated in full. The result therefore equals the brute-force
       minimum, including the lexicographic argmin.
    """
    del grid  # geometry is carried by the field
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    data = PairData.build(field_, alpha)
    k = max(1, int(coarse))
    nthreads = threads or thread_count()
    anchors, members = _cells(data.n_t, data.n_th, k)
    evaluations = 0

    # 1. coarse exhaustive
    Zc = _z(data, anchors[:, None], anchors[None, :])
    ok = _separation_ok(data, anchors[:, None], anchors[None, :], min_separation)
    if ok is not None:
        Zc = np.where(ok, Zc, np.inf)
    evaluations += Zc.size
    best = _Best()
    best.offer_block(Zc, anchors, anchors)
    flat = Zc.ravel()
    order = np.lexsort((np.arange(flat.size), flat))[:top_cells]

    # 2. local search around the best anchor pairs
    for o in order:
        if not np.isfinite(flat[o]):
            continue
        a, b = divmod(int(o), anchors.size)
        xs, ys = _window(data, anchors[a], k), _window(data, anchors[b], k)
        part = _block_min(data, xs, ys, min_separation)
        evaluations += xs.size * ys.size
        if part.p >= 0:
            best.offer(part.value, part.p, part.q)

    # 3. certification sweep
    Fc = data.F[anchors]
    mem_F = data.F[members]  # (cells, width, 4)
    diff = mem_F - Fc[:, None, :]
    radius = np.sqrt(np.max(np.sum(diff * diff, axis=-1), axis=1))
    slack = 1e-12 * (1.0 + float(np.max(np.abs(data.phi))))
    threshold = best.value + slack

    def sweep(rng):
        xs = np.arange(*rng)
        phi = data.phi[xs]
        safe = phi > 0
        C = data.F[xs] - data.nu[xs] / np.where(safe, phi, 1.0)[:, None]
        e = [Fc[None, :, c] - C[:, None, c] for c in range(4)]
        dist = np.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + e[3] * e[3])
        gap = np.maximum(dist - radius[None, :], 0.0)
        bound = 0.5 * phi[:, None] * (gap * gap - 1.0 / np.where(safe, phi, 1.0)[:, None] ** 2)
        bound = np.where(safe[:, None], bound, -np.inf)
        xi, ci = np.nonzero(bound <= threshold)
        local = _Best()
        if xi.size:
            X = xs[xi][:, None]
            Y = members[ci]
            Z = _z(data, np.broadcast_to(X, Y.shape), Y)
            ok = _separation_ok(data, np.broadcast_to(X, Y.shape), Y, min_separation)
            if ok is not None:
                Z = np.where(ok, Z, np.inf)
            local.offer_block(Z, np.broadcast_to(X, Y.shape), Y)
        return local, int(xi.size), int(xi.size) * members.shape[1]

    rows = _chunks(data.n, max(1, 4_000_000 // max(1, anchors.size)))
    with ThreadPoolExecutor(nthreads) as ex:
        results = list(ex.map(sweep, rows))
    certified = 0
    for local, ncell, nev in results:
        certified += ncell
        evaluations += nev
        if local.p >= 0:
            best.offer(local.value, local.p, local.q)

    scan = TwoPointScan(
        alpha=float(alpha), min_value=best.value,
        argmin=(data.index(best.p), data.index(best.q)), coarse=k, top_cells=int(top_cells),
        evaluations=int(evaluations), certified_cells=certified, min_separation=int(min_separation),
    )
    if polish:
        scan.polished_min = polish_minimum(field_, scan)
    return scan


def _line_values(data, p, q, which, axis, span):
    """Z along a grid line through x (which=0) or y (which=1) at offsets -span..span."""
    i, j = (data.index(p) if which == 0 else data.index(q))
    offs = np.arange(-span, span + 1)
    if axis == 0:
        pts = ((i + offs) % data.n_t) * data.n_th + j
    else:
        pts = i * data.n_th + (j + offs) % data.n_th
    if which == 0:
        return _z(data, pts, np.full_like(pts, q))
    return _z(data, np.full_like(pts, p), pts)


def polish_minimum(field_, scan: TwoPointScan):
    """Sub-grid estimate of the minimum from parabolas through the argmin along four index lines."""
    data = PairData.build(field_, scan.alpha)
    p = scan.argmin[0][0] * data.n_th + scan.argmin[0][1]
    q = scan.argmin[1][0] * data.n_th + scan.argmin[1][1]
    drop = 0.0
    for which in (0, 1):
        for axis in (0, 1):
            zm, z0, zp = _line_values(data, p, q, which, axis, 1)
            curv = zm - 2 * z0 + zp
            if curv > 0:
                drop += (zp - zm) ** 2 / (8 * curv)
    return float(scan.min_value - drop)


def kappa_star(grid, field_, tol=1e-6, alpha_tol=1e-3, alpha_max=64.0, coarse=4, threads=None,
               scans=None, initial=None):
    """Smallest alpha in [1, alpha_max] with min Z_alpha >= -tol, by bisection.

    Bisection is valid because Z_alpha is pairwise nondecreasing in alpha.
    Returns ``(kappa, tolerance)``; each scan is appended to ``scans`` if given.
    An existing alpha = 1 scan may be passed as ``initial``.
    """

    def ok(alpha):
        if alpha == 1.0 and initial is not None and initial.alpha == 1.0:
            return initial.min_value >= -tol
        s = scan_Z(grid, field_, alpha, coarse=coarse, threads=threads)
        if scans is not None:
            scans.append(s)
        return s.min_value >= -tol

    if ok(1.0):
        return 1.0, 0.0
    if not ok(alpha_max):
        raise NotNonnegativeAtMax(f"min Z_alpha < -{tol:g} even at alpha = {alpha_max:g}")
    lo, hi = 1.0, float(alpha_max)
    while hi - lo > alpha_tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi, hi - lo


def alpha_increment(field_, alpha, alpha2, x_idx, y_idx):
    """Z_alpha2 - Z_alpha at index pairs together with its closed form."""
    diff = evaluate_Z(field_, alpha2, x_idx, y_idx) - evaluate_Z(field_, alpha, x_idx, y_idx)
    data = PairData.build(field_, alpha)
    xs = x_idx[:, 0] * data.n_th + x_idx[:, 1]
    ys = y_idx[:, 0] * data.n_th + y_idx[:, 1]
    Fx, Fy = data.F[xs], data.F[ys]
    closed = (alpha2 - alpha) * data.spread[xs] * (1 - np.sum(Fx * Fy, axis=1))
    return diff, closed


@dataclass
class ReflectionCheck:
    pair: tuple
    normal_direction: list
    z_value: float
    residual_position: float
    residual_normal: float
    first_variation: float
    valid: bool
    touch_tol: float

    def to_dict(self):
        return {
            "name": "reflection",
            "pair": [list(self.pair[0]), list(self.pair[1])],
            "normal_direction": list(self.normal_direction),
            "z": self.z_value,
            "residual_position": self.residual_position,
            "residual_normal": self.residual_normal,
            "first_variation": self.first_variation,
            "touch_tol": self.touch_tol,
            "valid": self.valid,
        }


def first_variation(field_, pair, alpha=1.0):
    """Unit-speed derivatives of Z in the four grid directions at ``pair``.

    Each derivative is taken spectrally along the full periodic grid line.
    """
    data = PairData.build(field_, alpha)
    (i, j), (k, l) = pair
    p, q = i * data.n_th + j, k * data.n_th + l
    out = []
    for which, (a, b) in ((0, (i, j)), (1, (k, l))):
        for axis in (0, 1):
            n = data.n_t if axis == 0 else data.n_th
            span = n // 2
            vals = _line_values(data, p, q, which, axis, span)[: n]
            # vals[span] sits at the point itself; roll it to index 0.
            vals = np.roll(vals, -span)
            dz = spectral.spectral_diff(vals, axis=0)[0]
            speed = float(np.linalg.norm(field_.dF[a, b, axis]))
            out.append(dz / speed)
    return np.array(out)


def reflection_check(grid, field_, scan: TwoPointScan, touch_tol=TOUCH_TOL, min_separation=None):
    """Reflection residuals at an off-diagonal touching pair of Z_1.

    If the scan's argmin is diagonal, the minimum is searched again away from
    the diagonal (index separation ``min_separation``, default n/8).
    """
    if scan.alpha != 1.0:
        raise ValueError("reflection check needs the alpha = 1 scan")
    pair, value = scan.argmin, scan.min_value
    n_t, n_th = field_.shape
    if pair[0] == pair[1] or value > touch_tol:
        sep = min_separation or max(2, min(n_t, n_th) // 8)
        off = scan_Z(grid, field_, 1.0, coarse=scan.coarse, min_separation=sep)
        if not off.off_diagonal or off.min_value > touch_tol:
            raise NoTouchingPair(
                f"no off-diagonal pair with Z_1 <= {touch_tol:g} (best {off.min_value:.3e})"
            )
        pair, value = off.argmin, off.min_value
    (i, j), (k, l) = pair
    Fx, Fy = field_.F[i, j], field_.F[k, l]
    nx, ny = field_.nu[i, j], field_.nu[k, l]
    w = Fx - Fy
    w = w / np.linalg.norm(w)

    def tau(v):
        return v - 2 * np.dot(v, w) * w

    fv = first_variation(field_, pair)
    return ReflectionCheck(
        pair=(tuple(pair[0]), tuple(pair[1])),
        normal_direction=[float(c) for c in w],
        z_value=float(value),
        residual_position=float(np.linalg.norm(Fy - tau(Fx))),
        residual_normal=float(np.linalg.norm(ny - tau(nx))),
        first_variation=float(np.max(np.abs(fv))),
        valid=bool(value <= touch_tol and pair[0] != pair[1]),
        touch_tol=float(touch_tol),
    )


def inscribed_radius_report(grid, field_, tol=TOUCH_TOL, coarse=4, scan=None) -> ResidualSummary:
    """Pass iff min Z_1 >= -tol; ``max_abs`` is the size of the worst violation."""
    scan = scan or scan_Z(grid, field_, 1.0, coarse=coarse)
    violation = max(0.0, -scan.min_value)
    return ResidualSummary(
        name="inscribed_radius",
        max_abs=violation,
        mean_abs=violation,
        argmax=tuple(scan.argmin[0]) + tuple(scan.argmin[1]),
        tolerance=float(tol),
        passed=bool(scan.min_value >= -tol),
        resolution=field_.shape,
        extra={"min_value": scan.min_value, "evaluations": scan.evaluations},
    )
