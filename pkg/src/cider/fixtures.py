"""Synthetic test images and kernels, so nothing depends on external data."""

from __future__ import annotations

import numpy as np

from . import tensor as tc


def test_chart(size: int = 128) -> np.ndarray:
    """Piecewise-smooth chart: bars, discs, a ramp, a checkerboard and dots."""
    n = size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) / n
    img = 0.15 + 0.25 * xx  # background ramp
    # vertical bars of decreasing period in the top-left quadrant
    top = (yy < 0.45) & (xx < 0.5)
    period = np.where(xx < 0.25, 0.06, 0.035)
    img[top] = np.where(np.mod(xx[top], period[top]) < period[top] / 2, 0.85, 0.2)
    # discs
    for cy, cx, r, v in [(0.25, 0.75, 0.16, 0.9), (0.25, 0.75, 0.08, 0.3), (0.72, 0.3, 0.12, 0.7)]:
        img[(yy - cy) ** 2 + (xx - cx) ** 2 < r**2] = v
    # checkerboard patch
    patch = (yy > 0.58) & (xx > 0.58) & (yy < 0.92) & (xx < 0.92)
    cells = (np.floor(yy * n / 6) + np.floor(xx * n / 6)) % 2
    img[patch] = np.where(cells[patch] > 0, 0.8, 0.25)
    # small dots
    for cy, cx in [(0.55, 0.1), (0.6, 0.18), (0.9, 0.08), (0.95, 0.45), (0.52, 0.45)]:
        img[(yy - cy) ** 2 + (xx - cx) ** 2 < (1.5 / n) ** 2 * 4] = 1.0
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def motion_kernels() -> list[tc.Kernel]:
    """Two 15x15 camera-shake style kernels."""
    a = tc.motion_kernel(15, [(-5, -6), (-1, -2), (2, 1), (3, 6)])
    b = tc.motion_kernel(15, [(4, -5), (0, -3), (-2, 1), (1, 4), (-4, 6)])
    return [a, b]


def benchmark_kernels() -> dict[str, tc.Kernel]:
    a, b = motion_kernels()
    return {"gauss15": tc.gaussian_kernel(15, 2.0), "motion_a": a, "motion_b": b}


def rl_gain_kernel() -> tc.Kernel:
    """Mild Gaussian blur (sigma 1) used for the Richardson-Lucy gain check."""
    return tc.gaussian_kernel(7, 1.0)


def spots_on_background(size: int = 256, n_spots: int = 30, spot_sigma: float = 1.5,
                        background: float = 0.2, modulation: float = 0.05, seed: int = 0):
    """Sparse unit-height spots on a slowly varying background.

    Returns ``(image, background, spots, spot_mask)``; ``spot_mask`` marks
    every pixel where a spot contributes more than 1e-3.
    """
    rng = np.random.default_rng(seed)
    n = size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) / n
    bg = background * (1 - modulation / 2 + modulation / 2 * np.cos(2 * np.pi * xx) * np.cos(2 * np.pi * yy))
    spots = np.zeros((n, n))
    r = np.arange(n)
    for cy, cx in rng.integers(8, n - 8, size=(n_spots, 2)):
        g = np.exp(-((r[:, None] - cy) ** 2 + (r[None, :] - cx) ** 2) / (2 * spot_sigma**2))
        spots = np.maximum(spots, g)
    return (bg + spots).astype(np.float32), bg.astype(np.float32), spots.astype(np.float32), spots > 1e-3
