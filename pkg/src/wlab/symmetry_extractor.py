"""Killing-field extraction: phi, V = phi(l1 - l2) e1, and the rank-2 generator Q."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import expm
from scipy.spatial import cKDTree

from .errors import IllConditioned, RangeError
from .identity_verifier import ResidualSummary, summarize
from .psi_model import eval_psi
from .surface_core import UMBILIC_THRESHOLD, CurvatureField, TorusGrid

RANK_TOL = 1e-6
COND_MAX = 1e12
PHI_PAD = 0.05


def _phi_rhs(spec, s, phi):
    return -(1 + eval_psi(spec, s)[1]) / (2 * s) * phi


def _rk4_march(spec, s0, s1, m):
    """RK4 on phi' = -(1 + psi'(s)) phi / (2 s) from phi(s0) = 1 to s1 in m steps."""
    s = np.linspace(s0, s1, m + 1)
    h = (s1 - s0) / m
    phi = np.empty(m + 1)
    phi[0] = 1.0
    y = 1.0
    for n in range(m):
        x = s[n]
        k1 = _phi_rhs(spec, x, y)
        k2 = _phi_rhs(spec, x + h / 2, y + h / 2 * k1)
        k3 = _phi_rhs(spec, x + h / 2, y + h / 2 * k2)
        k4 = _phi_rhs(spec, x + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        phi[n + 1] = y
    return s, phi


@dataclass
class PhiTable:
    """Tabulated solution of the integrating-factor ODE with phi(s_ref) = 1."""

    s: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    s_ref: float
    halving_gap: float = 0.0

    @property
    def s_range(self):
        return float(self.s[0]), float(self.s[-1])

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.s, self.phi, self.dphi, extrapolate=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_range
        if np.min(s) < lo or np.max(s) > hi:
            raise RangeError(f"s in [{np.min(s):.6g}, {np.max(s):.6g}] outside the phi table [{lo:.6g}, {hi:.6g}]")
        return self._spline(s)

    def scaled(self, c):
        return PhiTable(self.s, c * self.phi, c * self.dphi, self.s_ref, self.halving_gap)


def solve_phi(spec, s_lo, s_hi, s_ref, steps=256, agree=1e-12, max_halvings=8) -> PhiTable:
    """Integrate phi' = -(1 + psi') phi / (2 s) outward from ``s_ref`` with step halving.

    The step count doubles until two successive resolutions agree to ``agree``
    (relative, at the shared nodes).
    """
    if not s_lo > 0:
        raise RangeError(f"s_lo must be positive, got {s_lo}")
    if not s_lo <= s_ref <= s_hi:
        raise RangeError(f"need s_lo <= s_ref <= s_hi, got {s_lo}, {s_ref}, {s_hi}")

    span = s_hi - s_lo
    left_m = max(1, int(round(steps * (s_ref - s_lo) / span))) if s_ref > s_lo else 0
    right_m = max(1, int(round(steps * (s_hi - s_ref) / span))) if s_hi > s_ref else 0
    if left_m + right_m == 0:
        raise RangeError("s_lo == s_hi leaves nothing to tabulate")

    def run(scale):
        parts_s, parts_p = [], []
        if left_m:
            sl, pl = _rk4_march(spec, s_ref, s_lo, left_m * scale)
            parts_s.append(sl[::-1])
            parts_p.append(pl[::-1])
        if right_m:
            sr, pr = _rk4_march(spec, s_ref, s_hi, right_m * scale)
            if parts_s:
                sr, pr = sr[1:], pr[1:]
            parts_s.append(sr)
            parts_p.append(pr)
        return np.concatenate(parts_s), np.concatenate(parts_p)

    scale = 1
    s, phi = run(scale)
    gap = math.inf
    for _ in range(max_halvings):
        scale *= 2
        s2, phi2 = run(scale)
        # Every other node of the refined run coincides with a coarse node.
        gap = float(np.max(np.abs(phi2[::2] - phi) / np.abs(phi)))
        s, phi = s2, phi2
        if gap <= agree:
            break
    dphi = _phi_rhs(spec, s, phi)
    return PhiTable(s, phi, dphi, float(s_ref), gap)


def phi_for_field(field_: CurvatureField, spec, pad=PHI_PAD) -> PhiTable:
    """phi tabulated over the observed spread (padded), normalized at its midpoint."""
    lo, hi = float(np.min(field_.spread)), float(np.max(field_.spread))
    if lo < UMBILIC_THRESHOLD:
        raise RangeError("spread reaches the umbilic threshold")
    s_ref = 0.5 * (lo + hi)
    width = max(hi - lo, 1e-3 * s_ref)
    return solve_phi(spec, max(lo - pad * width, 0.5 * lo), hi + pad * width, s_ref)


def curvature_line_constancy(field_: CurvatureField, tol=1e-8) -> ResidualSummary:
    """max |D1 l1|, |D1 l2|; |D2 l1| is reported alongside as a contrast value."""
    if float(np.min(field_.spread)) < UMBILIC_THRESHOLD:
        from .errors import UmbilicDegeneracy

        raise UmbilicDegeneracy("principal frame undefined")
    res = np.maximum(np.abs(field_.dlam[(1, 1)]), np.abs(field_.dlam[(1, 2)]))
    return summarize(
        "curvature_line_constancy", res, tol,
        d2_lambda1_max=float(np.max(np.abs(field_.dlam[(2, 1)]))),
    )


def build_killing(field_: CurvatureField, phi: PhiTable) -> np.ndarray:
    """V = phi(l1 - l2) e1 as an (n_t, n_th, 4) array."""
    return phi(field_.spread)[..., None] * field_.e1


def _so4_basis():
    basis = []
    for a in range(4):
        for b in range(a + 1, 4):
            E = np.zeros((4, 4))
            E[a, b], E[b, a] = -1.0, 1.0
            basis.append(E)
    return basis


SO4_BASIS = _so4_basis()


def q_from_params(x):
    return sum(c * E for c, E in zip(x, SO4_BASIS))


@dataclass
class SymmetryFit:
    Q: np.ndarray
    singular_values: np.ndarray
    rank2: bool
    fit_residual: float
    condition: float
    tangency_normal: float
    tangency_position: float
    lie_g: float | None = None
    lie_h: float | None = None
    bracket: float | None = None
    d1_lambda_residual: float | None = None
    flow_defect: float | None = None
    rank_tol: float = RANK_TOL
    extra: dict = field(default_factory=dict)

    @property
    def pairing(self):
        s = self.singular_values
        return float(abs(s[0] - s[1])), float(abs(s[2] - s[3]))

    def to_dict(self):
        out = {
            "name": "symmetry",
            "Q": [[float(v) for v in row] for row in self.Q],
            "singular_values": [float(v) for v in self.singular_values],
            "rank2": self.rank2,
            "fit_residual": self.fit_residual,
            "lie_g": self.lie_g,
            "lie_h": self.lie_h,
            "condition": self.condition,
            "tangency_normal": self.tangency_normal,
            "tangency_position": self.tangency_position,
            "bracket": self.bracket,
            "d1_lambda_residual": self.d1_lambda_residual,
            "flow_defect": self.flow_defect,
        }
        out.update(self.extra)
        return out


def fit_Q(grid: TorusGrid, V: np.ndarray, field_: CurvatureField | None = None, rank_tol=RANK_TOL) -> SymmetryFit:
    """Least-squares anti-symmetric Q with Q F(x) ~ V(x) over all grid points."""
    F = grid.points.reshape(-1, 4)
    Vf = V.reshape(-1, 4)
    # Column c holds E_c F for the c-th basis element; rows are (point, component).
    A = np.stack([F @ E.T for E in SO4_BASIS], axis=-1).reshape(-1, 6)
    sv_design = np.linalg.svd(A, compute_uv=False)
    cond = float((sv_design[0] / sv_design[-1]) ** 2) if sv_design[-1] > 0 else math.inf
    if cond > COND_MAX:
        raise IllConditioned(f"normal equations condition number {cond:.3e} exceeds {COND_MAX:g}")
    x, *_ = np.linalg.lstsq(A, Vf.reshape(-1), rcond=None)
    Q = q_from_params(x)
    QF = F @ Q.T
    vnorm = math.sqrt(float(np.sum(Vf * Vf)))
    resid = math.sqrt(float(np.sum((QF - Vf) ** 2))) / vnorm if vnorm > 0 else math.inf
    sv = np.linalg.svd(Q, compute_uv=False)
    top = float(sv[0]) if sv[0] > 0 else 1.0
    rank2 = bool(sv[1] > rank_tol * sv[0] and sv[2] < rank_tol * sv[0])
    tn = math.nan
    if field_ is not None:
        tn = float(np.max(np.abs(np.sum(QF * field_.nu.reshape(-1, 4), axis=1)))) / top
    tp = float(np.max(np.abs(np.sum(QF * F, axis=1)))) / top
    return SymmetryFit(
        Q=Q, singular_values=sv, rank2=rank2, fit_residual=resid, condition=cond,
        tangency_normal=tn, tangency_position=tp, rank_tol=rank_tol,
    )


def _coord_components(field_: CurvatureField, V):
    """Coordinate components V^a with V = V^a dF_a (V tangent)."""
    w = np.einsum("...ak,...k->...a", field_.dF, V)
    return np.einsum("...ab,...b->...a", field_.ginv, w)


def _lie_of_form(field_, Vc, form):
    """(L_V T)_ab = V^c d_c T_ab + T_cb d_a V^c + T_ac d_b V^c for a 2-tensor T."""
    dT = np.stack([field_.grad(form[..., a, b]) for a in range(2) for b in range(2)], axis=-2)
    dT = dT.reshape(form.shape[:-2] + (2, 2, 2))  # [..., a, b, c] = d_c T_ab
    dV = np.stack([field_.grad(Vc[..., c]) for c in range(2)], axis=-2)  # [..., c, a] = d_a V^c
    return (
        np.einsum("...c,...abc->...ab", Vc, dT)
        + np.einsum("...cb,...ca->...ab", form, dV)
        + np.einsum("...ac,...cb->...ab", form, dV)
    )


def lie_derivative_residuals(field_: CurvatureField, V):
    """max over the grid and i, j of |(L_V g)(e_i, e_j)| and |(L_V h)(e_i, e_j)|.

    The full Lie derivative is assembled in coordinates (transport term plus the
    two derivative-of-V terms) and then read off in the principal frame.
    """
    Vc = _coord_components(field_, V)
    out = []
    for form in (field_.g, field_.h):
        L = _lie_of_form(field_, Vc, form)
        out.append(max(float(np.max(np.abs(field_.frame_components(L, i, j)))) for i in (1, 2) for j in (1, 2)))
    return out[0], out[1]


def bracket_residual(field_: CurvatureField, V):
    """max |[V, e_k]| (ambient norm) for k = 1, 2."""
    Vc = _coord_components(field_, V)
    worst = 0.0
    for ec in (field_.e1c, field_.e2c):
        br = np.zeros_like(Vc)
        for a in range(2):
            br[..., a] = (
                np.einsum("...c,...c->...", Vc, field_.grad(ec[..., a]))
                - np.einsum("...c,...c->...", ec, field_.grad(Vc[..., a]))
            )
        amb = np.einsum("...a,...ak->...k", br, field_.dF)
        worst = max(worst, float(np.max(np.linalg.norm(amb, axis=-1))))
    return worst


def killing_flow_defect(grid: TorusGrid, field_: CurvatureField, Q, eps=1e-3, newton_steps=3):
    """Max distance from exp(eps Q / |Q|) F(x) to the surface.

    The nearest grid node is found with a k-d tree; the distance is then taken to
    the second-order Taylor patch of the surface at that node.
    """
    sv = np.linalg.svd(Q, compute_uv=False)[0]
    if sv == 0:
        return math.inf
    M = expm(eps * Q / sv)
    F = grid.points.reshape(-1, 4)
    P = F @ M.T
    tree = cKDTree(F)
    _, idx = tree.query(P)
    dF = field_.dF.reshape(-1, 2, 4)[idx]
    ddF = field_.ddF.reshape(-1, 2, 2, 4)[idx]
    base = F[idx]
    uv = np.zeros((P.shape[0], 2))
    for _ in range(newton_steps):
        X = base + np.einsum("na,nak->nk", uv, dF) + 0.5 * np.einsum("na,nb,nabk->nk", uv, uv, ddF)
        J = dF + np.einsum("nb,nabk->nak", uv, ddF)
        r = P - X
        JJ = np.einsum("nak,nbk->nab", J, J)
        rhs = np.einsum("nak,nk->na", J, r)
        uv = uv + np.linalg.solve(JJ, rhs[..., None])[..., 0]
    X = base + np.einsum("na,nak->nk", uv, dF) + 0.5 * np.einsum("na,nb,nabk->nk", uv, uv, ddF)
    return float(np.max(np.linalg.norm(P - X, axis=1)))


def extract_symmetry(grid: TorusGrid, field_: CurvatureField, spec, phi: PhiTable | None = None,
                     flow_eps=1e-3) -> SymmetryFit:
    """Full chain: phi, V, Q, and every consistency residual."""
    phi = phi or phi_for_field(field_, spec)
    V = build_killing(field_, phi)
    fit = fit_Q(grid, V, field_)
    fit.lie_g, fit.lie_h = lie_derivative_residuals(field_, V)
    fit.bracket = bracket_residual(field_, V)
    fit.d1_lambda_residual = curvature_line_constancy(field_).max_abs
    fit.flow_defect = killing_flow_defect(grid, field_, fit.Q, flow_eps)
    fit.extra = {"phi_s_ref": phi.s_ref, "phi_halving_gap": phi.halving_gap}
    return fit
