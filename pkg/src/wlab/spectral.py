"""Periodic differentiation, interpolation and quadrature on uniform grids."""

import math

import numpy as np

TWO_PI = 2 * math.pi


def wavenumbers(n, period=TWO_PI):
    return np.fft.fftfreq(n, d=period / (n * TWO_PI))


def spectral_diff(f, axis=0, order=1, period=TWO_PI):
    """Trigonometric derivative of ``f`` along ``axis``.

    For odd orders the Nyquist mode of an even-length grid is dropped, which
    keeps derivatives of real data real.
    """
    n = f.shape[axis]
    k = wavenumbers(n, period)
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[n // 2] = 0.0
    shape = [1] * f.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(f, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(f):
        return out.real
    return out


_FD4 = {1: ([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12], 1), 2: ([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], 2)}


def fd4_diff(f, axis=0, order=1, period=TWO_PI):
    """Fourth-order periodic central differences (robustness fallback)."""
    n = f.shape[axis]
    h = period / n
    weights, power = _FD4[order]
    out = np.zeros_like(f)
    for w, shift in zip(weights, range(-2, 3)):
        if w:
            out = out + w * np.roll(f, -shift, axis=axis)
    return out / h**power


def differentiator(method="spectral"):
    if method == "spectral":
        return spectral_diff
    if method == "fd4":
        return fd4_diff
    raise ValueError(f"unknown differentiation method {method!r}")


def fourier_eval(f, x, axis=0, period=TWO_PI):
    """Evaluate the trigonometric interpolant of samples ``f`` at points ``x``.

    The sampled axis is replaced by the points ``x`` (placed first).
    """
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    coef = np.fft.fft(f, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * TWO_PI / period * np.outer(x, k))
    if n % 2 == 0:
        # Nyquist term interpolated as a cosine.
        phase[:, n // 2] = np.cos(TWO_PI / period * x * (n // 2))
    out = np.tensordot(phase, coef, axes=(1, 0))
    if np.isrealobj(f):
        return out.real
    return out


def periodic_antiderivative(f, period=TWO_PI):
    """Antiderivative of a periodic 1-D sample set, zero at the first node.

    Returns ``(F, total)`` where ``total`` is the integral over one period
    (trapezoidal rule, spectrally accurate for smooth periodic data).
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    mean = f.mean()
    k = wavenumbers(n, period)
    c = np.fft.fft(f - mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(k != 0, c / (1j * k), 0.0)
    if n % 2 == 0:
        c[n // 2] = 0.0
    g = np.fft.ifft(c).real
    x = np.arange(n) * period / n
    F = mean * x + g - g[0]
    return F, mean * period


def resample_periodic(f, n_new, axis=0):
    """Band-limited resampling of periodic samples to ``n_new`` points."""
    n = f.shape[axis]
    x = np.arange(n_new) * n / n_new
    return np.moveaxis(fourier_eval(f, x, axis=axis, period=n), 0, axis)


def _axis_cutoff(c, axis, threshold):
    """One past the last wavenumber shell whose envelope exceeds ``threshold``."""
    n = c.shape[axis]
    env = np.max(np.abs(np.moveaxis(c, axis, 0)).reshape(n, -1), axis=1)
    half = n // 2
    # Pair +k and -k into one shell.
    shells = np.array([max(env[k], env[-k]) if k else env[0] for k in range(half + 1)])
    above = np.nonzero(shells > threshold)[0]
    return (int(above[-1]) + 1 if above.size else 1), shells


def plateau_filter(f, order=0, factor=16.0, flatness=10.0, floor_rel=64 * np.finfo(float).eps,
                   noise_scale=16.0):
    """Remove the round-off plateau from the spectrum of a real 2-D periodic field.

    Per axis, the noise level is the largest shell envelope over the top eighth
    of wavenumbers (the maximum, so sparse spectra are not mistaken for noise).
    The axis counts as noise-saturated only if the preceding eighth is within
    ``flatness`` of that level and the level is at most
    ``noise_scale * eps * (n/2)**order`` of the largest coefficient, where
    ``order`` is how many derivatives separate ``f`` from exactly rounded data.
    Then every mode beyond the last shell above ``factor`` times the noise level
    is zeroed. Coefficients below ``floor_rel`` times the largest one are always
    treated as noise. Anything above round-off is left alone.
    """
    c = np.fft.fft2(f) / f.size
    top = float(np.max(np.abs(c)))
    if top == 0.0:
        return f
    mask = np.ones(c.shape, dtype=bool)
    for axis in (0, 1):
        n = c.shape[axis]
        if n < 16:
            continue
        _, shells = _axis_cutoff(c, axis, 0.0)
        half, band = n // 2, max(2, n // 16)
        noise = float(np.max(shells[half - band + 1:]))
        previous = float(np.max(shells[half - 2 * band + 1:half - band + 1]))
        threshold = floor_rel * top
        noise_rel = noise_scale * np.finfo(float).eps * float(half) ** order
        if noise <= noise_rel * top and previous <= flatness * max(noise, threshold / factor):
            threshold = max(threshold, factor * noise)
        cut, _ = _axis_cutoff(c, axis, threshold)
        k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
        shape = [1, 1]
        shape[axis] = n
        mask &= (k < cut).reshape(shape)
    return np.fft.ifft2(np.where(mask, c, 0.0) * f.size).real
