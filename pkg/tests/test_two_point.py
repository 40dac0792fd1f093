import math

import numpy as np
import pytest

from conftest import MIXED, product, rotational
from wlab import two_point as tp
from wlab.errors import NotNonnegativeAtMax, NotWeingarten
from wlab.surface_core import TorusGrid, analyze


def bumped(u0, amp, n=32):
    """Torus u = u0 + amp sin(3t) cos(2th) in orbit coordinates (not Weingarten)."""
    t = np.arange(n) * 2 * math.pi / n
    T, H = np.meshgrid(t, t, indexing="ij")
    u = u0 + amp * np.sin(3 * T) * np.cos(2 * H)
    pts = np.stack([np.sin(u) * np.cos(H), np.sin(u) * np.sin(H), np.cos(u) * np.cos(T), np.cos(u) * np.sin(T)], -1)
    return TorusGrid(pts)


@pytest.fixture(scope="module")
def dented():
    g = bumped(0.3, 0.03)
    return g, analyze(g, allow_umbilic=True)


def test_closed_form_on_product():
    _, _, grid, f = product(1.0, 0.5, 0.0, 64)
    rng = np.random.default_rng(0)
    x = rng.integers(0, 64, size=(100, 2))
    y = rng.integers(0, 64, size=(100, 2))
    beta = (y[:, 1] - x[:, 1]) * 2 * math.pi / 64
    want = f.lam1[0, 0] * (1 - np.cos(beta))
    np.testing.assert_allclose(tp.evaluate_Z(f, 1.0, x, y), want, atol=1e-8)


def test_diagonal_vanishes(half):
    _, _, _, f = half
    idx = np.array([[0, 0], [5, 9], [63, 1]])
    np.testing.assert_allclose(tp.evaluate_Z(f, 2.5, idx, idx), 0.0, atol=0)


def test_alpha_increment_closed_form(mixed_torus):
    _, _, f = mixed_torus
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.integers(0, 128, 50), rng.integers(0, 64, 50)])
    y = np.column_stack([rng.integers(0, 128, 50), rng.integers(0, 64, 50)])
    diff, closed = tp.alpha_increment(f, 1.0, 3.0, x, y)
    np.testing.assert_allclose(diff, closed, atol=1e-12)
    assert np.all(diff >= -1e-14)


@pytest.mark.parametrize("sep", [0, 4])
def test_coarse_to_fine_matches_brute_force_product(sep):
    _, _, grid, f = product(1.0, 0.5, 0.0, 32)
    for alpha in (1.0, 2.0):
        brute = tp.brute_force_min(f, alpha, min_separation=sep)
        fast = tp.scan_Z(grid, f, alpha, min_separation=sep)
        assert fast.min_value == brute.min_value
        assert fast.argmin == brute.argmin
        assert fast.evaluations < brute.evaluations


@pytest.mark.parametrize("sep", [0, 4])
def test_coarse_to_fine_matches_brute_force_rotational(sep):
    _, grid, f = rotational(*MIXED["abc"], *MIXED["bracket"], 32)
    brute = tp.brute_force_min(f, 1.0, min_separation=sep)
    fast = tp.scan_Z(grid, f, 1.0, min_separation=sep)
    assert (fast.min_value, fast.argmin) == (brute.min_value, brute.argmin)


def test_coarse_to_fine_matches_on_negative_landscape(dented):
    grid, f = dented
    brute = tp.brute_force_min(f, 1.0)
    fast = tp.scan_Z(grid, f, 1.0)
    assert (fast.min_value, fast.argmin) == (brute.min_value, brute.argmin)
    assert brute.min_value < -0.1


def test_thread_count_independent(monkeypatch):
    _, _, grid, f = product(1.0, 0.5, 0.0, 32)
    monkeypatch.setenv("WLAB_THREADS", "3")
    assert tp.thread_count() == 3
    a = tp.scan_Z(grid, f, 1.0)
    monkeypatch.setenv("WLAB_THREADS", "1")
    b = tp.scan_Z(grid, f, 1.0)
    assert (a.min_value, a.argmin) == (b.min_value, b.argmin)
    monkeypatch.setenv("WLAB_THREADS", "junk")
    assert tp.thread_count() >= 1


def test_kappa_star_product(half):
    _, _, grid, f = half
    kappa, tol = tp.kappa_star(grid, f)
    assert kappa == 1.0 and tol == 0.0


def test_kappa_star_dented(dented):
    grid, f = dented
    kappa, tol = tp.kappa_star(grid, f)
    assert 1.5 < kappa < 1.8 and tol <= 1e-3
    scan = tp.scan_Z(grid, f, kappa)
    assert scan.min_value >= -1e-6
    with pytest.raises(NotNonnegativeAtMax):
        tp.kappa_star(grid, f, alpha_max=1.2)


def test_inscribed_radius(half, dented):
    _, _, grid, f = half
    assert tp.inscribed_radius_report(grid, f).passed
    grid, f = dented
    rep = tp.inscribed_radius_report(grid, f)
    assert not rep.passed and rep.max_abs > 0.1


def test_reflection_product(half):
    _, _, grid, f = half
    scan = tp.scan_Z(grid, f, 1.0)
    rc = tp.reflection_check(grid, f, scan)
    assert rc.valid and rc.pair[0] != rc.pair[1]
    assert rc.residual_normal < 1e-10 and rc.residual_position < 1e-12
    assert rc.first_variation < 1e-8
    assert rc.to_dict()["name"] == "reflection"


def test_reflection_needs_alpha_one(half):
    _, _, grid, f = half
    with pytest.raises(ValueError):
        tp.reflection_check(grid, f, tp.scan_Z(grid, f, 2.0))


def test_polish_is_below_grid_min(mixed_torus):
    _, grid, f = mixed_torus
    scan = tp.scan_Z(grid, f, 1.0, polish=True)
    assert scan.polished_min <= scan.min_value
    assert scan.to_dict()["polished_min"] == scan.polished_min


def test_strong_dent_is_not_weingarten():
    with pytest.raises(NotWeingarten):
        analyze(bumped(0.6, 0.1))
