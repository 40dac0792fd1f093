"""Surface calculus for doubly periodic tori sampled on S^3.

Sign conventions: the second fundamental form is ``h_ij = -<nu, F_ij>``, so
that ``d nu = h_i^k dF_k``.  The normal is oriented to make
``lambda1 + lambda2 > 0``.  Grid parameters are both taken on ``[0, 2 pi)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral
from .errors import (
    DegenerateImmersion,
    GridFormatError,
    NotConformalizable,
    NotWeingarten,
    UmbilicDegeneracy,
)

SCHEMA_VERSION = 1
UMBILIC_THRESHOLD = 1e-8
PROVENANCES = ("product", "profile", "external")


@dataclass
class TorusGrid:
    points: np.ndarray
    provenance: str = "external"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 4:
            raise GridFormatError(f"points must have shape (n_t, n_th, 4), got {pts.shape}")
        if pts.shape[0] < 4 or pts.shape[1] < 4:
            raise GridFormatError("grid too small")
        if not np.all(np.isfinite(pts)):
            raise GridFormatError("grid contains non-finite coordinates")
        dev = np.max(np.abs(np.linalg.norm(pts, axis=-1) - 1.0))
        if dev > 1e-12:
            raise GridFormatError(f"grid points are not on the unit sphere (max deviation {dev:.3e})")
        if self.provenance not in PROVENANCES:
            raise GridFormatError(f"unknown provenance {self.provenance!r}")
        self.points = pts

    @property
    def n_t(self):
        return self.points.shape[0]

    @property
    def n_th(self):
        return self.points.shape[1]

    @property
    def rotation_axis(self):
        return self.metadata.get("rotation_axis")

    def transformed(self, R):
        """Grid with every point multiplied by the 4x4 matrix ``R``."""
        return TorusGrid(self.points @ np.asarray(R).T, self.provenance, dict(self.metadata))

    def shifted(self, di, dj):
        return TorusGrid(np.roll(self.points, (-di, -dj), axis=(0, 1)), self.provenance, dict(self.metadata))

    def to_json(self):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n_t": self.n_t,
            "n_th": self.n_th,
            "provenance": self.provenance,
            "metadata": self.metadata,
            "points": self.points.reshape(-1, 4).tolist(),
        }
        return json.dumps(doc, indent=None, separators=(",", ":"))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GridFormatError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise GridFormatError("grid document must be an object")
        version = doc.get("schema_version", 1)
        if not isinstance(version, int) or version > SCHEMA_VERSION:
            raise GridFormatError(f"grid schema version {version} is newer than supported {SCHEMA_VERSION}")
        try:
            n_t, n_th = int(doc["n_t"]), int(doc["n_th"])
            pts = np.asarray(doc["points"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise GridFormatError(f"malformed grid document: {exc}") from exc
        if pts.shape != (n_t * n_th, 4):
            raise GridFormatError(f"expected {n_t * n_th} points of length 4, got shape {pts.shape}")
        return cls(pts.reshape(n_t, n_th, 4), doc.get("provenance", "external"), doc.get("metadata", {}))

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise GridFormatError(str(exc)) from exc
        return cls.from_json(text)


def product_grid(r, n_t, n_th, metadata=None):
    """Flat product torus ``(r cos t, r sin t, rho cos th, rho sin th)``."""
    rho = math.sqrt(1 - r * r)
    t = np.arange(n_t) * 2 * math.pi / n_t
    th = np.arange(n_th) * 2 * math.pi / n_th
    T, TH = np.meshgrid(t, th, indexing="ij")
    pts = np.stack([r * np.cos(T), r * np.sin(T), rho * np.cos(TH), rho * np.sin(TH)], axis=-1)
    pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    meta = {"r": r, "rotation_axis": 0}
    meta.update(metadata or {})
    return TorusGrid(pts, "product", meta)


def _normal4(F, Fa, Fb):
    """Unit vector orthogonal to F, Fa, Fb in R^4 (generalized cross product)."""
    M = np.stack([F, Fa, Fb], axis=-2)
    comps = []
    for k in range(4):
        cols = [c for c in range(4) if c != k]
        comps.append((-1) ** k * np.linalg.det(M[..., cols]))
    nu = np.stack(comps, axis=-1)
    return nu / np.linalg.norm(nu, axis=-1, keepdims=True)


def _dot(a, b):
    return np.einsum("...k,...k->...", a, b)


@dataclass
class CurvatureField:
    """Pointwise differential geometry of an analyzed grid (arrays of shape (n_t, n_th, ...))."""

    F: np.ndarray
    dF: np.ndarray  # (..., 2, 4): F_t, F_th
    ddF: np.ndarray  # (..., 2, 2, 4)
    g: np.ndarray
    ginv: np.ndarray
    h: np.ndarray
    nu: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e1c: np.ndarray  # coordinate components of e1
    e2c: np.ndarray
    frame_angle: np.ndarray
    christoffel: np.ndarray  # Gamma[..., c, a, b]
    dlam: dict
    method: str = "spectral"
    flipped: bool = False
    h_consistency: float = 0.0
    beta1: np.ndarray | None = None
    beta2: np.ndarray | None = None
    denoise: bool = True

    @property
    def shape(self):
        return self.lam1.shape

    @property
    def spread(self):
        return self.lam1 - self.lam2

    @property
    def curvature_scale(self):
        return float(max(np.max(np.abs(self.lam1)), np.max(np.abs(self.lam2)), 1e-300))

    def _prepare(self, f):
        # Curvature-level fields carry round-off from two derivatives of the data.
        if self.denoise and self.method == "spectral" and np.isrealobj(f) and f.ndim == 2:
            return spectral.plateau_filter(f, order=2)
        return f

    def grad(self, f):
        d = spectral.differentiator(self.method)
        f = self._prepare(f)
        return np.stack([d(f, axis=0), d(f, axis=1)], axis=-1)

    def directional(self, f, k):
        """Derivative of the scalar field ``f`` along ``e_k`` (k = 1, 2)."""
        ec = self.e1c if k == 1 else self.e2c
        return np.einsum("...a,...a->...", ec, self.grad(f))

    def hessian_frame(self, f, k):
        """Second covariant derivative ``D^2_{k,k} f`` in the principal frame."""
        d = spectral.differentiator(self.method)
        f = self._prepare(f)
        f_a = self.grad(f)
        f_ab = np.empty(f.shape + (2, 2))
        f_ab[..., 0, 0] = d(f, axis=0, order=2)
        f_ab[..., 1, 1] = d(f, axis=1, order=2)
        f_ab[..., 0, 1] = f_ab[..., 1, 0] = d(d(f, axis=0), axis=1)
        hess = f_ab - np.einsum("...cab,...c->...ab", self.christoffel, f_a)
        ec = self.e1c if k == 1 else self.e2c
        return np.einsum("...a,...ab,...b->...", ec, hess, ec)

    def frame_components(self, form, i, j):
        """``form(e_i, e_j)`` for a coordinate 2-tensor field ``form``."""
        ei = self.e1c if i == 1 else self.e2c
        ej = self.e1c if j == 1 else self.e2c
        return np.einsum("...a,...ab,...b->...", ei, form, ej)


def _filter_components(a, order):
    out = np.empty_like(a)
    for idx in np.ndindex(a.shape[2:]):
        sl = (slice(None), slice(None)) + idx
        out[sl] = spectral.plateau_filter(a[sl], order=order)
    return out


def analyze(grid: TorusGrid, spec=None, method="spectral", allow_umbilic=False, denoise=True) -> CurvatureField:
    """Fundamental forms, normal, principal curvatures and frames of ``grid``.

    With ``denoise`` (spectral method only) the round-off plateau is stripped
    from the spectra of the derivative fields and of every scalar field that is
    differentiated later; resolved content is untouched.
    """
    d = spectral.differentiator(method)
    F = grid.points
    Ft, Fs = d(F, axis=0), d(F, axis=1)
    Ftt, Fss = d(F, axis=0, order=2), d(F, axis=1, order=2)
    Fts = d(Ft, axis=1)
    denoise = denoise and method == "spectral"
    if denoise:
        Ft, Fs = (_filter_components(x, 1) for x in (Ft, Fs))
        Ftt, Fss, Fts = (_filter_components(x, 2) for x in (Ftt, Fss, Fts))
    dF = np.stack([Ft, Fs], axis=-2)
    ddF = np.stack([np.stack([Ftt, Fts], axis=-2), np.stack([Fts, Fss], axis=-2)], axis=-3)

    g = np.einsum("...ak,...bk->...ab", dF, dF)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.min(det) <= 1e-10 * np.max(det):
        raise DegenerateImmersion(f"Gram determinant {np.min(det):.3e} too small")
    ginv = np.empty_like(g)
    ginv[..., 0, 0] = g[..., 1, 1] / det
    ginv[..., 1, 1] = g[..., 0, 0] / det
    ginv[..., 0, 1] = ginv[..., 1, 0] = -g[..., 0, 1] / det

    nu = _normal4(F, Ft, Fs)
    h = -np.einsum("...k,...abk->...ab", nu, ddF)

    # Orthonormal tangent basis E1 = Ft/|Ft|, E2 = Gram-Schmidt(Fs); A holds coordinates.
    n1 = np.sqrt(g[..., 0, 0])
    proj = g[..., 0, 1] / g[..., 0, 0]
    n2 = np.sqrt(det / g[..., 0, 0])
    A = np.zeros(g.shape)
    A[..., 0, 0] = 1 / n1
    A[..., 0, 1] = -proj / n2
    A[..., 1, 1] = 1 / n2
    H = np.einsum("...ai,...ab,...bj->...ij", A, h, A)
    mean = 0.5 * (H[..., 0, 0] + H[..., 1, 1])
    half = np.hypot(0.5 * (H[..., 0, 0] - H[..., 1, 1]), H[..., 0, 1])

    scale = float(np.max(np.abs(mean) + half))
    tol = 1e-8 * max(scale, 1.0)
    Hsum = 2 * mean
    flipped = False
    if np.min(Hsum) < -tol and np.max(Hsum) > tol:
        raise NotWeingarten("lambda1 + lambda2 changes sign for both normal orientations")
    if np.mean(Hsum) < -tol:
        flipped = True
        nu, h, H, mean = -nu, -h, -H, -mean
    lam1, lam2 = mean + half, mean - half
    if not allow_umbilic and np.min(half) * 2 < UMBILIC_THRESHOLD:
        raise UmbilicDegeneracy(f"min(lambda1 - lambda2) = {2 * np.min(half):.3e}")

    angle = 0.5 * np.arctan2(2 * H[..., 0, 1], H[..., 0, 0] - H[..., 1, 1])
    c, s = np.cos(angle), np.sin(angle)
    sign = _propagate_signs(c, s, Ft, Fs, A)
    c, s = sign * c, sign * s
    E1 = Ft / n1[..., None]
    E2 = (Fs - proj[..., None] * Ft) / n2[..., None]
    e1 = c[..., None] * E1 + s[..., None] * E2
    e2 = -s[..., None] * E1 + c[..., None] * E2
    e1c = np.einsum("...ai,...i->...a", A, np.stack([c, s], axis=-1))
    e2c = np.einsum("...ai,...i->...a", A, np.stack([-s, c], axis=-1))

    gamma_low = np.einsum("...abk,...dk->...abd", ddF, dF)
    christoffel = np.einsum("...cd,...abd->...cab", ginv, gamma_low)

    # Independent route to h through the derivative of the normal.
    dnu = np.stack([d(nu, axis=0), d(nu, axis=1)], axis=-2)
    h_alt = np.einsum("...ak,...bk->...ab", dnu, dF)
    h_alt = 0.5 * (h_alt + np.swapaxes(h_alt, -1, -2))
    h_gap = float(np.max(np.abs(h - h_alt)) / max(1.0, float(np.max(np.abs(h)))))

    field = CurvatureField(
        F=F, dF=dF, ddF=ddF, g=g, ginv=ginv, h=h, nu=nu, lam1=lam1, lam2=lam2,
        e1=e1, e2=e2, e1c=e1c, e2c=e2c, frame_angle=np.arctan2(s, c),
        christoffel=christoffel, dlam={}, method=method, flipped=flipped, h_consistency=h_gap,
        denoise=denoise,
    )
    for k in (1, 2):
        for i, lam in ((1, lam1), (2, lam2)):
            field.dlam[(k, i)] = field.directional(lam, k)
    if spec is not None:
        attach_betas(field, spec)
    return field


def attach_betas(field: CurvatureField, spec):
    from .psi_model import beta_coeffs

    field.beta1, field.beta2 = beta_coeffs(spec, field.spread)
    return field


def _propagate_signs(c, s, Ft, Fs, A):
    """Row-major sign choice making e1 continuous from the (0, 0) seed."""
    # e1 in orthonormal-basis components; inner products need the actual vectors.
    n1 = np.linalg.norm(Ft, axis=-1)
    E1 = Ft / n1[..., None]
    E2c = A[..., :, 1]
    E2 = E2c[..., 0, None] * Ft + E2c[..., 1, None] * Fs
    e1 = c[..., None] * E1 + s[..., None] * E2

    along = np.sign(_dot(e1[:, 1:], e1[:, :-1]))
    along[along == 0] = 1
    down = np.sign(_dot(e1[1:, 0], e1[:-1, 0]))
    down[down == 0] = 1
    col0 = np.concatenate([[1.0], np.cumprod(down)])
    rows = np.concatenate([np.ones((c.shape[0], 1)), np.cumprod(along, axis=1)], axis=1)
    sign = col0[:, None] * rows

    seed = float(_dot(e1[0, 0], Ft[0, 0]))
    if abs(seed) < 1e-12 * n1[0, 0]:
        seed = float(_dot(e1[0, 0], Fs[0, 0]))
    if seed < 0:
        sign = -sign
    return sign


def umbilic_diagnostics(field: CurvatureField):
    """Minimum curvature spread and principal-direction winding along both generator loops."""
    spread = field.spread
    min_spread = float(np.min(spread))
    if min_spread < UMBILIC_THRESHOLD:
        return min_spread, (math.nan, math.nan)
    # Angle of e1 against the coordinate frame; doubling removes the line-field sign.
    doubled = 2 * field.frame_angle

    def turning(path):
        closed = np.append(path, path[0])
        return int(round((np.unwrap(closed)[-1] - closed[0]) / (2 * math.pi)))

    return min_spread, (turning(doubled[:, 0]), turning(doubled[0, :]))


@dataclass
class ConformalData:
    tau_period: float
    n_tau: int
    n_theta: int
    dtau: float
    dtheta: float
    rho: np.ndarray
    h_zz: np.ndarray
    h_zbzb: np.ndarray
    h_zzb: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    conformality_defect: float
    quadrature_period: float

    def d_tau(self, f):
        return spectral.spectral_diff(f, axis=0, period=self.tau_period)

    def d_theta(self, f):
        return spectral.spectral_diff(f, axis=1)

    def d_z(self, f):
        return 0.5 * (self.d_tau(f) - 1j * self.d_theta(f))

    def d_zbar(self, f):
        return 0.5 * (self.d_tau(f) + 1j * self.d_theta(f))


def _rotational_axes(field: CurvatureField, tol=1e-8):
    g = field.g
    scale = float(np.max(np.abs(g)))
    if np.max(np.abs(g[..., 0, 1])) > tol * scale:
        return None
    for rot in (1, 0):
        var = max(np.max(np.ptp(g[..., i, i], axis=rot)) for i in (0, 1))
        if var <= tol * scale:
            return rot
    return None


def conformal_data(grid: TorusGrid, method="spectral") -> ConformalData:
    """Reparametrize a rotational grid conformally, z = tau + i theta."""
    field = analyze(grid, method=method, allow_umbilic=True)
    rot = _rotational_axes(field)
    if rot is None:
        raise NotConformalizable("metric is not of rotational form dt^2 + w(t)^2 dtheta^2")
    pts = grid.points if rot == 1 else np.swapaxes(grid.points, 0, 1)
    g = field.g if rot == 1 else np.swapaxes(field.g, 0, 1)[..., ::-1, ::-1]
    prof_g, rot_g = g[:, 0, 0, 0], g[:, 0, 1, 1]
    weight = np.sqrt(prof_g / rot_g)
    n = weight.size
    tau_nodes, period = spectral.periodic_antiderivative(weight)
    quad_period = float(np.sum(weight) * 2 * math.pi / n)

    # Invert tau(t) on a uniform tau grid by Newton on the trigonometric interpolant.
    t_nodes = np.arange(n) * 2 * math.pi / n
    periodic_part = tau_nodes - period / (2 * math.pi) * t_nodes
    target = np.arange(n) * period / n
    t = target * 2 * math.pi / period
    for _ in range(50):
        tau_t = period / (2 * math.pi) * t + spectral.fourier_eval(periodic_part, t)
        w_t = spectral.fourier_eval(weight, t)
        step = (tau_t - target) / w_t
        t -= step
        if np.max(np.abs(step)) < 1e-15:
            break
    new_pts = spectral.fourier_eval(pts, t, axis=0)
    new_pts /= np.linalg.norm(new_pts, axis=-1, keepdims=True)
    cgrid = TorusGrid(new_pts, grid.provenance, dict(grid.metadata, rotation_axis=1))
    cf = analyze(cgrid, method=method, allow_umbilic=True)

    s = 2 * math.pi / period  # d(index param)/d(tau)
    g_tt = cf.g[..., 0, 0] * s * s
    g_th = cf.g[..., 0, 1] * s
    g_hh = cf.g[..., 1, 1]
    lam_metric = 0.5 * (g_tt + g_hh)
    defect = float(max(np.max(np.abs(g_tt - g_hh)), np.max(np.abs(g_th))) / np.max(lam_metric))
    e2rho = lam_metric / 4
    h_tt = cf.h[..., 0, 0] * s * s
    h_th = cf.h[..., 0, 1] * s
    h_hh = cf.h[..., 1, 1]
    h_zz = 0.25 * (h_tt - h_hh - 2j * h_th)
    return ConformalData(
        tau_period=float(period),
        n_tau=n,
        n_theta=cgrid.n_th,
        dtau=float(period / n),
        dtheta=2 * math.pi / cgrid.n_th,
        rho=0.5 * np.log(e2rho),
        h_zz=h_zz,
        h_zbzb=np.conj(h_zz),
        h_zzb=0.25 * (h_tt + h_hh),
        lam1=cf.lam1,
        lam2=cf.lam2,
        conformality_defect=defect,
        quadrature_period=quad_period,
    )
