import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab import spectral

coeffs = st.lists(st.floats(-1, 1), min_size=7, max_size=7)


def trig(c, x):
    """Degree-3 trigonometric polynomial and its first two derivatives."""
    f = c[0] + sum(c[k] * np.cos(k * x) + c[k + 3] * np.sin(k * x) for k in (1, 2, 3))
    df = sum(-k * c[k] * np.sin(k * x) + k * c[k + 3] * np.cos(k * x) for k in (1, 2, 3))
    ddf = sum(-k * k * (c[k] * np.cos(k * x) + c[k + 3] * np.sin(k * x)) for k in (1, 2, 3))
    return f, df, ddf


@settings(max_examples=40, deadline=None)
@given(coeffs, st.sampled_from([16, 17, 32]))
def test_spectral_derivative_exact_on_trig_polynomials(c, n):
    x = np.arange(n) * 2 * math.pi / n
    f, df, ddf = trig(c, x)
    np.testing.assert_allclose(spectral.spectral_diff(f), df, atol=1e-12)
    np.testing.assert_allclose(spectral.spectral_diff(f, order=2), ddf, atol=1e-11)


def test_axis_and_period():
    n, L = 24, 3.0
    x = np.arange(n) * L / n
    f = np.sin(2 * math.pi * x / L)[None, :].repeat(3, axis=0)
    got = spectral.spectral_diff(f, axis=1, period=L)
    np.testing.assert_allclose(got[1], 2 * math.pi / L * np.cos(2 * math.pi * x / L), atol=1e-12)


def test_fd4_is_fourth_order():
    errs = []
    for n in (32, 64):
        x = np.arange(n) * 2 * math.pi / n
        errs.append(np.max(np.abs(spectral.fd4_diff(np.exp(np.sin(x))) - np.cos(x) * np.exp(np.sin(x)))))
    assert math.log2(errs[0] / errs[1]) > 3.8


def test_unknown_method():
    with pytest.raises(ValueError):
        spectral.differentiator("fd2")


def test_fourier_eval_interpolates():
    n = 20
    x = np.arange(n) * 2 * math.pi / n
    f = np.cos(3 * x) + 0.5 * np.sin(x)
    pts = np.array([0.1, 1.7, 4.4])
    np.testing.assert_allclose(spectral.fourier_eval(f, pts), np.cos(3 * pts) + 0.5 * np.sin(pts), atol=1e-13)


def test_antiderivative():
    n = 64
    x = np.arange(n) * 2 * math.pi / n
    F, total = spectral.periodic_antiderivative(2 + np.cos(x))
    assert total == pytest.approx(4 * math.pi)
    np.testing.assert_allclose(F, 2 * x + np.sin(x), atol=1e-13)


def test_resample_round_trip():
    n = 30
    x = np.arange(n) * 2 * math.pi / n
    f = np.exp(np.cos(x))
    up = spectral.resample_periodic(f, 90)
    np.testing.assert_allclose(up[::3], f, atol=1e-13)


def test_plateau_filter_keeps_resolved_content():
    n = 64
    x = np.arange(n) * 2 * math.pi / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.exp(0.5 * np.cos(X)) * np.sin(2 * Y)
    np.testing.assert_allclose(spectral.plateau_filter(f), f, atol=1e-14)


def test_plateau_filter_removes_roundoff_plateau():
    n = 64
    x = np.arange(n) * 2 * math.pi / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    clean = np.cos(X) + np.sin(3 * Y)
    noisy = clean + 1e-13 * np.random.default_rng(3).standard_normal(clean.shape)
    out = spectral.plateau_filter(noisy)
    assert np.max(np.abs(out - clean)) < 0.2 * np.max(np.abs(noisy - clean))
    # Second derivative amplifies the plateau; filtering removes that amplification.
    d2 = lambda g: spectral.spectral_diff(g, axis=0, order=2)
    assert np.max(np.abs(d2(out) - d2(clean))) < 1e-11 < np.max(np.abs(d2(noisy) - d2(clean)))


def test_plateau_filter_leaves_decaying_spectrum():
    n = 32
    x = np.arange(n) * 2 * math.pi / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = 1 / (1.2 - np.cos(X)) + np.cos(Y)  # still decaying at the Nyquist shell
    np.testing.assert_allclose(spectral.plateau_filter(f), f, atol=1e-14)


def test_plateau_filter_keeps_sparse_tail():
    # Content only on every fourth mode, with a small but real tail.
    n = 80
    t = 2 * np.pi * np.arange(n) / n
    f = np.add.outer(np.cos(4 * t) + 1e-10 * np.cos(36 * t), np.sin(t))
    np.testing.assert_allclose(spectral.plateau_filter(f, order=2), f, rtol=0, atol=1e-14)


def test_plateau_filter_guard_scales_with_order():
    rng = np.random.default_rng(3)
    n = 128
    t = 2 * np.pi * np.arange(n) / n
    clean = np.add.outer(np.cos(t), np.sin(2 * t))
    noisy = clean + 1e-12 * rng.standard_normal((n, n))
    # 1e-12 is far above round-off for data but typical after two derivatives.
    assert np.max(np.abs(spectral.plateau_filter(noisy, order=0) - noisy)) < 1e-14
    assert np.max(np.abs(spectral.plateau_filter(noisy, order=2) - clean)) < 1e-13
