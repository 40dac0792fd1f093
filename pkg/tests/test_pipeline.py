import numpy as np
import pytest

from conftest import product
from wlab.pipeline import run_verification


def names(report):
    return [c["name"] for c in report.checks]


def test_quick_run_on_product():
    spec, _, grid, _ = product(1.0, 0.5, 0.0, 32)
    report, art = run_verification(grid, spec, mode="quick")
    assert report.passed, report.failed()
    got = names(report)
    assert got[0] == "weingarten"
    for want in ("structure", "umbilic", "simons_1", "barrier_alpha_2", "beltrami",
                 "inscribed_radius", "two_point_alpha_1", "reflection", "symmetry"):
        assert want in got
    assert "barrier_alpha_4" not in got
    assert art["field"] is not None and art["fit"] is not None


def test_full_mode_reports_kappa():
    spec, _, grid, _ = product(1.0, 0.5, 0.0, 32)
    report, _ = run_verification(grid, spec, mode="full", timings=True)
    tp = next(c for c in report.checks if c["name"] == "two_point_alpha_1")
    assert tp["kappa_star"] == 1.0
    assert {"analyze", "identities", "two_point", "symmetry"} <= set(report.timings)


def test_mismatched_spec_fails_weingarten_first():
    _, _, grid, _ = product(1.0, 0.5, 0.0, 32)
    from conftest import spec_of

    report, _ = run_verification(grid, spec_of(4.0, 0.0, 0.0), mode="quick")
    assert not report.passed
    assert report.failed()[0] == "weingarten"
    assert report.checks[0]["max_abs"] == pytest.approx(np.sqrt(6) - 2, abs=1e-10)


def test_non_weingarten_surface_is_recorded():
    from test_two_point import bumped
    from conftest import spec_of

    report, art = run_verification(bumped(0.6, 0.1), spec_of(1.0, 0.0, 0.0), mode="quick")
    assert not report.passed
    assert report.checks[0]["name"] == "analyze"
    assert "NotWeingarten" in report.checks[0]["error"]


def test_non_rotational_grid_skips_conformal():
    from test_surface_core import sheared_product
    from wlab import rotational_builder as rb
    from conftest import spec_of

    spec = spec_of(1.0, 0.5, 0.0)
    grid = sheared_product(rb.product_radius(spec), 32)
    report, _ = run_verification(grid, spec, mode="quick")
    assert "beltrami" not in names(report)
    assert any("conformal" in n for n in report.notes)


def test_mode_validation():
    _, _, grid, _ = product(1.0, 0.5, 0.0, 32)
    with pytest.raises(ValueError):
        run_verification(grid, product(1.0, 0.5, 0.0, 32)[0], mode="slow")
