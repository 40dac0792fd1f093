"""Acceptance criteria 1-11, one test each; verdict lines appear in the pytest summary."""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import special_ortho_group

from conftest import CMC, MIXED, VERDICTS, clifford, product, rotational, spec_of
from test_symmetry_extractor import phi_by_quadrature
from wlab import identity_verifier as iv
from wlab import symmetry_extractor as se
from wlab import two_point as tp
from wlab.cli import main
from wlab.psi_model import check_structure
from wlab.surface_core import analyze, conformal_data

ALPHAS = (1.25, 2.0, 4.0)
LADDER = (64, 128, 256)
EXAMPLES = {"cmc (1,0,0)": CMC, "mixed (2.5,0.5,0)": MIXED}


def verdict(n, ok, detail):
    VERDICTS.append(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def refined(example, n):
    """Rotational torus for refinement studies: ODE step tied to the grid (4 steps per cell)."""
    return rotational(*example["abc"], *example["bracket"], n, n // 2, 4)


def test_criterion_01_structure():
    start = time.perf_counter()
    good = check_structure(spec_of(1.0, 0.5, 0.0), 20.0, n=10_000)
    bad = check_structure(spec_of(1.0, 1.5, 0.0), 20.0, n=10_000)
    elapsed = time.perf_counter() - start
    margins = [good.margin_a, good.margin_b, good.margin_c, good.margin_d]
    ok = good.passed and min(margins) > 0 and not bad.passed and bad.margin_a < 0 and elapsed < 1.0
    verdict(1, ok, f"min margin {min(margins):.3e} (pass), b=1.5 margin_a {bad.margin_a:.3f} (fail), {elapsed:.3f} s")


def test_criterion_02_product_construction():
    # Oracle: 1 - 4u^2 = u^2 + 0.5 with u = r sqrt(1 - r^2).
    u = brentq(lambda x: (1 - 4 * x * x) - (x * x + 0.5), 0.0, 0.5, xtol=1e-15)
    r_oracle = math.sqrt((1 - math.sqrt(1 - 4 * u * u)) / 2)
    spec, r, grid, f = product(1.0, 0.5, 0.0, 64)
    res = iv.weingarten_residual(f, spec).max_abs
    ok = abs(r - 0.335711) <= 1e-6 and abs(r - r_oracle) <= 1e-12 and res < 1e-10
    verdict(2, ok, f"r = {r:.9f} (oracle {r_oracle:.9f}), Weingarten residual {res:.2e} at 64x64")


def test_criterion_03_clifford():
    _, f = clifford(64)
    e1, e2 = np.max(np.abs(f.lam1 - 1)), np.max(np.abs(f.lam2 + 1))
    spread = float(np.min(f.spread))
    ok = max(e1, e2) < 1e-10 and abs(spread - 2) < 1e-10
    verdict(3, ok, f"|l1-1| {e1:.1e}, |l2+1| {e2:.1e}, min spread {spread:.12f}")


def _simons_max(spec, f):
    return max(s.max_abs for s in iv.simons_residual(f, spec))


def test_criterion_04_simons():
    prod = [_simons_max(*product(1.0, 0.5, 0.0, n)[::3]) for n in (64, 128)]
    ratios = {}
    for label, ex in EXAMPLES.items():
        coarse, fine = (_simons_max(*refined(ex, n)[::2]) for n in (128, 256))
        ratios[label] = coarse / fine
    ok = max(prod) < 1e-10 and min(ratios.values()) >= 4
    detail = ", ".join(f"{k} 128->256 drop x{v:.1f}" for k, v in ratios.items())
    verdict(4, ok, f"product max {max(prod):.1e}; {detail}")


def test_criterion_05_barrier():
    worst, rel = -math.inf, 0.0
    tori = [product(1.0, 0.5, 0.0, 128)[::3]] + [rotational(*ex["abc"], *ex["bracket"], 128)[::2] for ex in EXAMPLES.values()]
    for spec, f in tori:
        for a in ALPHAS:
            s = iv.barrier_scan(f, spec, a)
            worst = max(worst, s.extra["max_value"] if s.passed else math.inf)
    spec, _, _, f = product(1.0, 0.5, 0.0, 128)
    for a in ALPHAS:
        want = iv.barrier_closed_form(spec, float(f.lam1[0, 0]), float(f.lam2[0, 0]), a)
        got = iv.barrier_scan(f, spec, a).extra["max_value"]
        rel = max(rel, abs(got - want) / abs(want))
    ok = worst < 0 and rel < 1e-10
    verdict(5, ok, f"largest grid maximum {worst:.3e} over 3 tori x 3 alphas; product closed-form rel err {rel:.1e}")


def test_criterion_06_two_point():
    _, _, g32, f32 = product(1.0, 0.5, 0.0, 32)
    agree = all(
        (lambda b, c: (b.min_value, b.argmin) == (c.min_value, c.argmin))(
            tp.brute_force_min(f32, a), tp.scan_Z(g32, f32, a))
        for a in (1.0, 2.0)
    )
    _, _, grid, f = product(1.0, 0.5, 0.0, 128)
    rng = np.random.default_rng(2024)
    x, y = rng.integers(0, 128, (100, 2)), rng.integers(0, 128, (100, 2))
    beta = (y[:, 1] - x[:, 1]) * 2 * math.pi / 128
    cf = float(np.max(np.abs(tp.evaluate_Z(f, 1.0, x, y) - f.lam1[0, 0] * (1 - np.cos(beta)))))
    scan = tp.scan_Z(grid, f, 1.0)
    kappa, _ = tp.kappa_star(grid, f, initial=scan)
    ok = agree and scan.min_value >= -1e-6 and cf < 1e-8 and kappa <= 1 + 1e-3
    verdict(6, ok, f"min Z1 {scan.min_value:.2e} at 128^4, c2f==brute at 32^4: {agree}, "
                   f"closed form err {cf:.1e}, kappa* {kappa}")


def test_criterion_07_reflection():
    _, _, grid, f = product(1.0, 0.5, 0.0, 128)
    rc = tp.reflection_check(grid, f, tp.scan_Z(grid, f, 1.0))
    ok = rc.valid and rc.residual_normal < 1e-6
    verdict(7, ok, f"residual_normal {rc.residual_normal:.1e}, residual_position {rc.residual_position:.1e}, pair {rc.pair}")


def test_criterion_08_symmetry():
    d1 = max(se.curvature_line_constancy(rotational(*ex["abc"], *ex["bracket"], 128)[2]).max_abs
             for ex in EXAMPLES.values())
    spec, _, grid, f = product(1.0, 0.5, 0.0, 64)
    fit = se.extract_symmetry(grid, f, spec)
    d1 = max(d1, fit.d1_lambda_residual)
    sv = fit.singular_values
    paired = abs(sv[0] - sv[1]) <= 1e-10 * sv[0] and sv[2] < 1e-6 * sv[0] and sv[3] < 1e-6 * sv[0]
    R = special_ortho_group.rvs(4, random_state=99)
    g2 = grid.transformed(R)
    moved = se.extract_symmetry(g2, analyze(g2, spec), spec)
    equiv = float(np.max(np.abs(moved.Q - R @ fit.Q @ R.T)))
    ok = d1 < 1e-8 and fit.fit_residual < 1e-10 and paired and fit.rank2 and equiv < 1e-10
    verdict(8, ok, f"D1 lambda {d1:.1e}, fit {fit.fit_residual:.1e}, sv {np.array2string(sv, precision=3)}, "
                   f"rank2 {fit.rank2}, equivariance {equiv:.1e}")


def test_criterion_09_phi():
    s = np.linspace(0.4, 6.0, 401)
    phi = se.solve_phi(spec_of(2.0, 0.0, 0.0), 0.4, 6.0, 1.7)
    const = float(np.max(np.abs(phi(s) - np.sqrt(1.7 / s))))
    spec = spec_of(1.0, 1.0, 0.0)
    phi = se.solve_phi(spec, 0.4, 6.0, 1.0)
    pts = np.linspace(0.4, 6.0, 29)
    quad_err = float(np.max(np.abs(phi(pts) - [phi_by_quadrature(spec, x, 1.0) for x in pts])))
    verdict(9, const < 1e-10 and quad_err < 1e-9, f"constant-psi err {const:.1e}, quadrature err {quad_err:.1e}")


def _families(spec, grid, f):
    V = se.build_killing(f, se.phi_for_field(f, spec))
    lie_g, lie_h = se.lie_derivative_residuals(f, V)
    belt = iv.conformal_residuals(conformal_data(grid), f, spec)[2].max_abs
    return {"gradient": iv.gradient_constraint_residual(f).max_abs, "lie_g": lie_g, "lie_h": lie_h, "beltrami": belt}


def test_criterion_10_refinement():
    lines, failures = [], []
    for label, ex in EXAMPLES.items():
        rows = [_families(*refined(ex, n)) for n in LADDER]
        for key in rows[0]:
            trace = [(n, r[key]) for n, r in zip(LADDER, rows)]
            orders = iv.observed_orders(trace)
            lines.append(f"{label} {key} orders {', '.join(f'{o:.2f}' for o in orders)}")
            if min(orders) < 2:
                failures.append(f"{label} {key} ({', '.join(f'{v:.2e}' for _, v in trace)})")
    detail = "; ".join(lines)
    if failures:
        detail += " | below order 2: " + "; ".join(failures)
    verdict(10, not failures, detail)


@pytest.mark.slow
def test_criterion_11_runtime(tmp_path, capsys):
    from wlab import rotational_builder as rb

    timings = {}
    r, grid = rb.product_torus(spec_of(1.0, 0.5, 0.0), 128, 128)
    grid.save(tmp_path / "product.json")
    rb.emit_grid(rb.close_profile(spec_of(*CMC["abc"]), 1, 2, CMC["bracket"]), 128, 128).save(tmp_path / "cmc.json")
    codes = {}
    for name in ("product", "cmc"):
        start = time.perf_counter()
        codes[name] = main(["verify", "--grid", str(tmp_path / f"{name}.json"), "--mode", "full",
                            "--two-point-coarse", "4", "--report", str(tmp_path / f"{name}_report.json")])
        timings[name] = time.perf_counter() - start
    capsys.readouterr()
    ok = all(c == 0 for c in codes.values()) and max(timings.values()) < 60
    verdict(11, ok, ", ".join(f"{k} 128x128 full verify {v:.1f} s (exit {codes[k]})" for k, v in timings.items()))
