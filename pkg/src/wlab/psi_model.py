"""The Weingarten function psi, its derivatives and the structure conditions.

A :class:`PsiSpec` is either the closed-form family ``sqrt(a + b s^2) + c`` or a
table of ``(s, psi, dpsi, ddpsi)`` samples.  Every evaluator works on
``s >= 0`` only; evenness of psi is implicit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import InvalidSpec, OutOfRange, StructureViolation

SQRT_FAMILY = "SqrtFamily"
TABULATED = "Tabulated"


@dataclass(frozen=True)
class PsiSpec:
    kind: str = SQRT_FAMILY
    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    table: np.ndarray | None = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.kind == SQRT_FAMILY:
            vals = (self.a, self.b, self.c)
            if not all(math.isfinite(float(v)) for v in vals):
                raise InvalidSpec(f"non-finite family parameters {vals}")
            if self.a <= 0:
                raise InvalidSpec(f"a must be positive, got {self.a}")
            if self.b < 0:
                raise InvalidSpec(f"b must be nonnegative, got {self.b}")
            if self.c < 0:
                raise InvalidSpec(f"c must be nonnegative, got {self.c}")
        elif self.kind == TABULATED:
            _validate_table(self.table)
        else:
            raise InvalidSpec(f"unknown psi kind {self.kind!r}")

    @classmethod
    def sqrt_family(cls, a, b, c):
        return cls(SQRT_FAMILY, float(a), float(b), float(c))

    @classmethod
    def tabulated(cls, s, psi, dpsi, ddpsi, name="table"):
        table = np.column_stack([s, psi, dpsi, ddpsi]).astype(float)
        return cls(TABULATED, table=table, name=name)

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["s", "psi", "dpsi", "ddpsi"]:
                raise InvalidSpec(f"{path}: header must be s,psi,dpsi,ddpsi")
            rows = [[float(r[k]) for k in ("s", "psi", "dpsi", "ddpsi")] for r in reader]
        if not rows:
            raise InvalidSpec(f"{path}: empty table")
        arr = np.asarray(rows)
        return cls.tabulated(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], name=path.name)

    @property
    def s_range(self):
        if self.kind == SQRT_FAMILY:
            return 0.0, math.inf
        return float(self.table[0, 0]), float(self.table[-1, 0])

    def label(self):
        if self.kind == SQRT_FAMILY:
            return f"SqrtFamily(a={self.a!r}, b={self.b!r}, c={self.c!r})"
        return f"Tabulated({self.name})"

    def to_dict(self):
        if self.kind == SQRT_FAMILY:
            return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c}
        return {"kind": self.kind, "name": self.name, "n_rows": int(self.table.shape[0])}

    @cached_property
    def _splines(self):
        s, p, dp, ddp = self.table.T
        return (
            CubicHermiteSpline(s, p, dp, extrapolate=False),
            CubicHermiteSpline(s, dp, ddp, extrapolate=False),
            PchipInterpolator(s, ddp, extrapolate=False),
        )

    def _check_range(self, s):
        lo, hi = self.s_range
        smin, smax = np.min(s), np.max(s)
        if smin < 0:
            raise OutOfRange(f"psi is evaluated on s >= 0 only (got {smin})")
        if smin < lo or smax > hi:
            raise OutOfRange(f"s in [{smin}, {smax}] outside tabulated range [{lo}, {hi}]")

    # Scalar fast paths used inside ODE right-hand sides.
    def psi1(self, s):
        if self.kind == SQRT_FAMILY:
            return math.sqrt(self.a + self.b * s * s) + self.c
        self._check_range(s)
        return float(self._splines[0](s))

    def dpsi1(self, s):
        if self.kind == SQRT_FAMILY:
            return self.b * s / math.sqrt(self.a + self.b * s * s)
        self._check_range(s)
        return float(self._splines[1](s))

    def ddpsi1(self, s):
        if self.kind == SQRT_FAMILY:
            q = self.a + self.b * s * s
            return self.a * self.b / (q * math.sqrt(q))
        self._check_range(s)
        return float(self._splines[2](s))


def _validate_table(table, consistency_tol=1e-6):
    if table is None or table.ndim != 2 or table.shape[1] != 4:
        raise InvalidSpec("tabulated psi needs an (n, 4) array of s, psi, dpsi, ddpsi")
    if table.shape[0] < 4:
        raise InvalidSpec("tabulated psi needs at least 4 rows")
    if not np.all(np.isfinite(table)):
        raise InvalidSpec("tabulated psi contains non-finite values")
    s, p, dp, ddp = table.T
    if s[0] != 0.0:
        raise InvalidSpec("tabulated psi must start at s = 0")
    if np.any(np.diff(s) <= 0):
        raise InvalidSpec("tabulated s must be strictly increasing")
    if abs(dp[0]) > consistency_tol:
        raise InvalidSpec("psi is even, so dpsi(0) must vanish")
    h = np.diff(s)
    scale = max(1.0, float(np.max(np.abs(p))))
    # Trapezoid with end corrections is O(h^5) per interval.
    pred = h / 2 * (dp[:-1] + dp[1:]) + h**2 / 12 * (ddp[:-1] - ddp[1:])
    if np.max(np.abs(np.diff(p) - pred)) > consistency_tol * scale:
        raise InvalidSpec("tabulated dpsi is inconsistent with psi")
    pred = h / 2 * (ddp[:-1] + ddp[1:])
    allowed = consistency_tol * max(1.0, float(np.max(np.abs(dp)))) + h * np.abs(np.diff(ddp))
    if np.any(np.abs(np.diff(dp) - pred) > allowed):
        raise InvalidSpec("tabulated ddpsi is inconsistent with dpsi")


def eval_psi(spec: PsiSpec, s):
    """Return ``(psi, dpsi, ddpsi, chi)`` at ``s >= 0``.

    ``chi = dpsi / s`` with the continuous extension ``chi(0) = ddpsi(0)``.
    Accepts scalars or arrays; scalars come back as floats.
    """
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    if spec.kind == SQRT_FAMILY:
        if np.any(s < 0):
            raise OutOfRange("psi is evaluated on s >= 0 only")
        q = spec.a + spec.b * s * s
        root = np.sqrt(q)
        psi = root + spec.c
        chi = spec.b / root
        dpsi = s * chi
        ddpsi = spec.a * spec.b / (q * root)
    else:
        spec._check_range(s)
        f0, f1, f2 = spec._splines
        psi, dpsi, ddpsi = f0(s), f1(s), f2(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            chi = np.where(s > 1e-8, dpsi / np.where(s > 1e-8, s, 1.0), ddpsi)
    if scalar:
        return float(psi), float(dpsi), float(ddpsi), float(chi)
    return psi, dpsi, ddpsi, chi


@dataclass
class StructureReport:
    s_max: float
    n_samples: int
    margin_a: float
    margin_b: float
    margin_c: float
    margin_d: float
    passed: bool
    worst_s: dict
    tol: float

    def to_dict(self):
        return {
            "name": "structure",
            "s_max": self.s_max,
            "n_samples": self.n_samples,
            "margin_a": self.margin_a,
            "margin_b": self.margin_b,
            "margin_c": self.margin_c,
            "margin_d": self.margin_d,
            "tolerance": self.tol,
            "pass": self.passed,
            "worst_s": dict(self.worst_s),
        }


def structure_grid(s_max, n, n_geo=64):
    """Uniform grid on [s_max/n, s_max] joined with a geometric grid towards 0."""
    uniform = np.linspace(s_max / n, s_max, n)
    geo = np.geomspace(s_max / n * 1e-6, s_max / n, n_geo, endpoint=False)
    return np.union1d(geo, uniform)


def check_structure(spec: PsiSpec, s_max: float, n: int = 10_000, tol: float = 1e-12) -> StructureReport:
    """Scan the four structure conditions on (0, s_max].

    Conditions: A) s psi' < min(psi, s) strictly; B) s psi' >= 0;
    C) s psi'' >= 0; D) s psi'' <= 1 - psi'^2.
    """
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    if n < 2:
        raise ValueError("need at least 2 samples")
    s = structure_grid(float(s_max), int(n))
    psi, dpsi, ddpsi, _ = eval_psi(spec, s)
    margins = {
        "a": np.minimum(psi, s) - s * dpsi,
        "b": s * dpsi,
        "c": s * ddpsi,
        "d": (1 - dpsi**2) - s * ddpsi,
    }
    worst = {k: float(s[int(np.argmin(v))]) for k, v in margins.items()}
    mins = {k: float(np.min(v)) for k, v in margins.items()}
    passed = mins["a"] > 0 and mins["b"] >= -tol and mins["c"] >= -tol and mins["d"] >= -tol
    return StructureReport(
        s_max=float(s_max),
        n_samples=int(s.size),
        margin_a=mins["a"],
        margin_b=mins["b"],
        margin_c=mins["c"],
        margin_d=mins["d"],
        passed=bool(passed),
        worst_s=worst,
        tol=tol,
    )


def beta_coeffs(spec: PsiSpec, s):
    """Elliptic weights ``(1 - psi'(s), 1 + psi'(s))``."""
    dpsi = eval_psi(spec, s)[1]
    if np.any(np.abs(dpsi) >= 1):
        raise StructureViolation(f"|psi'| >= 1 at s = {s}; the weights degenerate")
    return 1 - dpsi, 1 + dpsi
