"""Iterative wavelet background estimation for fluorescence-style images.

The estimate starts from the input with every pixel above the image mean set
to zero. Each iteration keeps only the coarsest approximation band of a
multi-level Daubechies decomposition, reconstructs it, and caps it pointwise
by ``sqrt(y) / 2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pywt

from . import tensor as tc
from .errors import ConfigurationError, InputError, ShapeError

WAVELET = "db6"
MODE = "symmetric"


@dataclass
class WaveletPyramid:
    """Multi-level 2D decomposition.

    ``details[0]`` belongs to the coarsest level, matching ``approx``; each
    entry is the (horizontal, vertical, diagonal) triple of that level.
    """

    approx: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    shape: tuple[int, int]
    wavelet: str = WAVELET

    @property
    def levels(self) -> int:
        return len(self.details)

    def lowpass_only(self) -> "WaveletPyramid":
        zeroed = [tuple(np.zeros_like(b) for b in lvl) for lvl in self.details]
        return WaveletPyramid(self.approx.copy(), zeroed, self.shape, self.wavelet)


@dataclass
class BackgroundEstimate:
    background: np.ndarray
    iterations_used: int


def max_levels(n: int, wavelet: str = WAVELET) -> int:
    """Number of decomposition levels that still shrink an axis of length ``n``.

    With boundary padding a level maps ``n`` to ``(n + L - 1) // 2`` for a
    filter of length ``L``; once that stops being smaller than ``n`` further
    levels only smear the boundary extension.
    """
    flen = pywt.Wavelet(wavelet).dec_len
    count = 0
    while n > 1 and (n + flen - 1) // 2 < n:
        n = (n + flen - 1) // 2
        count += 1
    return count


def _check_levels(shape, levels: int, wavelet: str) -> None:
    if levels < 1:
        raise ConfigurationError(f"wavelet levels must be >= 1, got {levels}")
    feasible = min(max_levels(shape[0], wavelet), max_levels(shape[1], wavelet))
    if levels > feasible:
        raise ConfigurationError(
            f"image of size {shape[0]}x{shape[1]} is too small for {levels} {wavelet} levels; "
            f"max feasible levels is {feasible}"
        )


def _as_image(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"expected a single-channel image, got shape {arr.shape}")
    tc.check_finite(arr)
    return arr


def dwt2(img, levels: int = 7, wavelet: str = WAVELET) -> WaveletPyramid:
    """Separable multi-level DWT with half-sample symmetric extension."""
    x = _as_image(img)
    _check_levels(x.shape, levels, wavelet)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(x, wavelet, mode=MODE, level=levels)
    return WaveletPyramid(coeffs[0], [tuple(c) for c in coeffs[1:]], x.shape, wavelet)


def idwt2(pyr: WaveletPyramid) -> np.ndarray:
    """Inverse of :func:`dwt2`, cropped back to the original image size."""
    for i, lvl in enumerate(pyr.details):
        if len(lvl) != 3 or any(b.shape != lvl[0].shape for b in lvl):
            raise ShapeError(f"inconsistent detail bands at level {i}")
    try:
        out = pywt.waverec2([pyr.approx, *pyr.details], pyr.wavelet, mode=MODE)
    except ValueError as exc:
        raise ShapeError(f"inconsistent wavelet pyramid: {exc}") from exc
    h, w = pyr.shape
    return out[:h, :w].astype(np.float32)


def estimate_background(y, iters: int = 3, levels: int = 7, wavelet: str = WAVELET) -> BackgroundEstimate:
    """Estimate a smooth background under a ``sqrt(y)/2`` cap."""
    y = _as_image(y)
    if np.any(y < 0):
        raise InputError("background estimation needs non-negative pixels")
    if iters < 1:
        raise ConfigurationError(f"iters must be >= 1, got {iters}")
    _check_levels(y.shape, levels, wavelet)
    residual = np.where(y > y.mean(), 0.0, y)
    cap = np.sqrt(y) / 2
    for _ in range(iters):
        low = idwt2(dwt2(residual, levels, wavelet).lowpass_only()).astype(np.float64)
        residual = np.minimum(low, cap)
    background = np.maximum(residual, 0.0).astype(np.float32)
    return BackgroundEstimate(background, iters)


def remove_background(y, iters: int = 3, levels: int = 7, wavelet: str = WAVELET, estimate=None) -> np.ndarray:
    """Subtract the estimated background and clamp at zero."""
    arr = _as_image(y)
    if estimate is None:
        estimate = estimate_background(arr, iters, levels, wavelet)
    out = np.maximum(arr.astype(np.float32) - estimate.background, 0.0)
    return out[None] if np.ndim(y) == 3 else out
