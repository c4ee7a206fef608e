"""Fit and tracking metrics, plus the spatial spectrum of gridded efforts."""

from __future__ import annotations

import numpy as np

__all__ = ["bfr", "error_norms", "relative_reduction", "spatial_spectrum"]


def bfr(y, yhat) -> float:
    """Best fit ratio in percent, ``100 max(1 - |y - yhat| / |y - mean(y)|, 0)``."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size < 2:
        raise ValueError("need at least two samples")
    denom = np.linalg.norm(y - y.mean())
    if denom == 0.0:
        raise ValueError("BFR undefined for a constant signal")
    return 100.0 * max(1.0 - np.linalg.norm(y - yhat) / denom, 0.0)


def error_norms(errors):
    """``(|e|_2 / sqrt(N), |e|_inf)``."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("empty error signal")
    return float(np.linalg.norm(e) / np.sqrt(e.size)), float(np.max(np.abs(e)))


def relative_reduction(before: float, after: float) -> float:
    """Percent reduction from ``before`` to ``after``."""
    return 100.0 * (1.0 - after / before) if before > 0 else 0.0


def spatial_spectrum(grid, spacing, pad: int = 8):
    """2-D Fourier magnitude of a uniformly gridded field and its dominant wavelengths.

    ``grid[i, j]`` is the value at ``(x_i, y_j)``; ``spacing`` is a scalar or an
    ``(dx, dy)`` pair, or a pair of coordinate vectors which must be uniform.
    The mean is removed and the grid zero-padded ``pad`` times per axis before
    the transform.  Returns ``(magnitude, (kx, ky), (wavelength_x, wavelength_y))``
    with the magnitude already ``fftshift``-ed and ``k`` in cycles per metre.
    A wavelength is ``inf`` when the peak lies on the zero-frequency line and
    both are ``nan`` when the spectrum is identically zero.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D")
    dx, dy = _spacing(spacing, grid.shape)
    nx, ny = grid.shape[0] * pad, grid.shape[1] * pad
    mag = np.abs(np.fft.fftshift(np.fft.fft2(grid - grid.mean(), s=(nx, ny))))
    kx = np.fft.fftshift(np.fft.fftfreq(nx, dx))
    ky = np.fft.fftshift(np.fft.fftfreq(ny, dy))
    peak = mag.max()
    if peak <= 1e-12 * max(np.abs(grid).max(), 1.0) * grid.size:
        return mag, (kx, ky), (float("nan"), float("nan"))
    i, j = np.unravel_index(np.argmax(mag), mag.shape)
    with np.errstate(divide="ignore"):
        wl = (1.0 / abs(kx[i]) if kx[i] != 0 else np.inf, 1.0 / abs(ky[j]) if ky[j] != 0 else np.inf)
    return mag, (kx, ky), wl


def _spacing(spacing, shape):
    if np.ndim(spacing) == 0:
        return float(spacing), float(spacing)
    sx, sy = spacing
    out = []
    for s, n in zip((sx, sy), shape):
        if np.ndim(s) == 0:
            out.append(float(s))
            continue
        s = np.asarray(s, dtype=float)
        if s.size != n:
            raise ValueError("coordinate vector length does not match the grid")
        d = np.diff(s)
        if not np.allclose(d, d[0], rtol=1e-6, atol=0):
            raise ValueError("grid spacing is not uniform")
        out.append(float(d[0]))
    return tuple(out)
