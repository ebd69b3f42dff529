"""Dense image tensors, kernels and deterministic 2D filtering.

Tensors are plain ``numpy`` arrays shaped ``(channels, height, width)``.
Functions here also accept 2D ``(height, width)`` arrays and return arrays of
the same rank they were given.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, FormatError, InputError, ShapeError

DTYPE = np.float32


class BoundaryMode(str, enum.Enum):
    REPLICATE = "replicate"
    REFLECT = "reflect"
    CIRCULAR = "circular"

    @classmethod
    def parse(cls, value: "BoundaryMode | str") -> "BoundaryMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown boundary mode {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


def as_tensor(x, dtype=DTYPE) -> np.ndarray:
    """View ``x`` as a rank-3 ``(C, H, W)`` array of ``dtype``."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"expected a 2D image or 3D tensor, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"empty tensor of shape {arr.shape}")
    return arr


def as_float(x) -> np.ndarray:
    """Rank-3 float view; float64 inputs stay float64, everything else is float32."""
    arr = np.asarray(x)
    return as_tensor(arr, np.float64 if arr.dtype == np.float64 else DTYPE)


def _like(result: np.ndarray, original) -> np.ndarray:
    return result[0] if np.ndim(original) == 2 else result


def check_finite(x: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(x)):
        raise InputError(f"{what} contains NaN or Inf values")


@dataclass(frozen=True, eq=False)
class Kernel:
    """Non-negative, unit-sum point-spread function with odd dimensions."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=DTYPE)
        if w.ndim != 2:
            raise ConfigurationError(f"kernel must be 2D, got shape {w.shape}")
        h, wd = w.shape
        if h % 2 == 0 or wd % 2 == 0:
            raise ConfigurationError(f"kernel dimensions must be odd, got {h}x{wd}")
        if not np.all(np.isfinite(w)):
            raise InputError("kernel contains NaN or Inf values")
        if np.any(w < 0):
            raise InputError("kernel weights must be non-negative")
        total = float(w.astype(np.float64).sum())
        if abs(total - 1.0) > 1e-6:
            raise ConfigurationError(f"kernel must sum to 1 (got {total:.8g}); use Kernel.normalized")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, weights) -> "Kernel":
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 2:
            raise ConfigurationError(f"kernel must be 2D, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("kernel contains NaN or Inf values")
        if np.any(w < 0):
            raise InputError("kernel weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise InputError("kernel weights must have a positive sum")
        return cls(w / total)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def __eq__(self, other):
        return isinstance(other, Kernel) and np.array_equal(self.weights, other.weights)

    __hash__ = None


def as_kernel(k) -> Kernel:
    return k if isinstance(k, Kernel) else Kernel(k)


def flip(k: Kernel) -> Kernel:
    """Rotate a kernel by 180 degrees (the adjoint of convolution)."""
    k = as_kernel(k)
    return Kernel(k.weights[::-1, ::-1].copy())


def delta_kernel(size: int = 1) -> Kernel:
    w = np.zeros((size, size))
    w[size // 2, size // 2] = 1.0
    return Kernel(w)


def box_kernel(size: int) -> Kernel:
    return Kernel.normalized(np.ones((size, size)))


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return Kernel.normalized(np.outer(g, g))


def motion_kernel(size: int, points, width: float = 0.6) -> Kernel:
    """Rasterise a piecewise-linear camera path into a ``size`` x ``size`` PSF.

    ``points`` are ``(row, col)`` offsets from the kernel centre. Each segment
    is sampled densely and splatted with a small Gaussian of std ``width``.
    """
    pts = np.asarray(points, dtype=np.float64)
    c = size // 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    w = np.zeros((size, size))
    for p0, p1 in zip(pts[:-1], pts[1:]):
        n = max(2, int(np.ceil(np.hypot(*(p1 - p0)) * 4)))
        for t in np.linspace(0.0, 1.0, n, endpoint=False):
            r, q = p0 + t * (p1 - p0) + c
            w += np.exp(-((yy - r) ** 2 + (xx - q) ** 2) / (2 * width**2))
    r, q = pts[-1] + c
    w += np.exp(-((yy - r) ** 2 + (xx - q) ** 2) / (2 * width**2))
    w[w < 1e-4 * w.max()] = 0.0
    return Kernel.normalized(w)


# ---------------------------------------------------------------------------
# Boundary handling


def boundary_index(n: int, before: int, after: int, mode: BoundaryMode | str) -> np.ndarray:
    """Source indices for a 1D axis of length ``n`` padded by ``before``/``after``."""
    mode = BoundaryMode.parse(mode)
    idx = np.arange(-before, n + after)
    if mode is BoundaryMode.REPLICATE:
        return np.clip(idx, 0, n - 1)
    if mode is BoundaryMode.CIRCULAR:
        return np.mod(idx, n)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def pad(x: np.ndarray, ph: int, pw: int, mode: BoundaryMode | str) -> np.ndarray:
    """Pad the two trailing axes of ``x`` by ``ph`` rows and ``pw`` columns per side."""
    h, w = x.shape[-2:]
    rows = boundary_index(h, ph, ph, mode)
    cols = boundary_index(w, pw, pw, mode)
    return x[..., rows, :][..., cols]


def fold_matrix(n: int, before: int, after: int, mode: BoundaryMode | str, dtype=np.float64) -> np.ndarray:
    """0/1 matrix ``P`` (n x n+before+after) with ``P @ padded`` = adjoint of padding."""
    idx = boundary_index(n, before, after, mode)
    m = np.zeros((n, idx.size), dtype=dtype)
    m[idx, np.arange(idx.size)] = 1.0
    return m


def unpad(g: np.ndarray, h: int, w: int, ph: int, pw: int, mode: BoundaryMode | str) -> np.ndarray:
    """Adjoint of :func:`pad`: fold a padded gradient back onto the source grid."""
    cols = boundary_index(w, pw, pw, mode)
    out = g[..., pw : pw + w].copy()
    for v in (*range(pw), *range(pw + w, g.shape[-1])):
        out[..., cols[v]] += g[..., v]
    rows = boundary_index(h, ph, ph, mode)
    folded = out[..., ph : ph + h, :].copy()
    for u in (*range(ph), *range(ph + h, g.shape[-2])):
        folded[..., rows[u], :] += out[..., u, :]
    return folded


# ---------------------------------------------------------------------------
# Filtering


def _filter(img, weights: np.ndarray, mode) -> np.ndarray:
    x = as_float(img)
    check_finite(x)
    kh, kw = weights.shape
    rh, rw = kh // 2, kw // 2
    xp = pad(x, rh, rw, mode)
    out = np.empty_like(x)
    w = np.asarray(weights, dtype=x.dtype)
    for c in range(x.shape[0]):
        full = ndimage.correlate(xp[c], w, mode="constant")
        out[c] = full[rh : rh + x.shape[1], rw : rw + x.shape[2]]
    return _like(out, img)


def correlate2d_same(img, k, mode: BoundaryMode | str = BoundaryMode.REPLICATE) -> np.ndarray:
    """Same-size 2D correlation of every channel of ``img`` with kernel ``k``.

    ``out[i, j] = sum_ab k[a, b] * x[i + a - rh, j + b - rw]`` where samples
    outside the image follow ``mode``. Accumulation is done in float64.
    """
    weights = k.weights if isinstance(k, Kernel) else _check_odd(k)
    return _filter(img, weights, mode)


def conv2d_same(img, k, mode: BoundaryMode | str = BoundaryMode.REPLICATE) -> np.ndarray:
    """Same-size 2D convolution; equal to correlating with the flipped kernel."""
    weights = k.weights if isinstance(k, Kernel) else _check_odd(k)
    return _filter(img, np.ascontiguousarray(weights[::-1, ::-1]), mode)


def _check_odd(w) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
        raise ConfigurationError(f"filter must be 2D with odd dimensions, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InputError("filter contains NaN or Inf values")
    return w


# ---------------------------------------------------------------------------
# Resampling


def resample(t, direction: str, method: str = "nearest") -> np.ndarray:
    """Resize the spatial axes by a factor of two.

    ``direction`` is ``"up"`` or ``"down"``; ``method`` is ``"nearest"`` or
    ``"bilinear"``. Bilinear uses half-pixel centres with edge clamping, and
    its downsampling is the 2x2 block mean.
    """
    x = as_float(t)
    if method not in ("nearest", "bilinear"):
        raise ConfigurationError(f"unknown resampling method {method!r}")
    if direction == "up":
        if method == "nearest":
            out = x.repeat(2, axis=1).repeat(2, axis=2)
        else:
            out = _bilinear_up_axis(_bilinear_up_axis(x, 1), 2)
    elif direction == "down":
        h, w = x.shape[1:]
        if h % 2 or w % 2:
            raise ShapeError(f"downsampling needs even dimensions, got {h}x{w}")
        if method == "nearest":
            out = x[:, ::2, ::2].copy()
        else:
            out = x.reshape(x.shape[0], h // 2, 2, w // 2, 2).mean(axis=(2, 4), dtype=np.float64).astype(x.dtype)
    else:
        raise ConfigurationError(f"direction must be 'up' or 'down', got {direction!r}")
    return _like(out, t)


def _bilinear_up_axis(x: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    pos = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
    pos = np.clip(pos, 0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = (pos - lo).astype(x.dtype)
    shape = [1, 1, 1]
    shape[axis] = 2 * n
    frac = frac.reshape(shape)
    return np.take(x, lo, axis=axis) * (1 - frac) + np.take(x, hi, axis=axis) * frac


# ---------------------------------------------------------------------------
# Kernel text format


def parse_kernel_text(text: str) -> Kernel:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty kernel file")
    try:
        h, w = (int(v) for v in lines[0].split())
    except ValueError:
        raise FormatError(f"bad kernel header {lines[0]!r}; expected 'H W'") from None
    if len(lines) != h + 1:
        raise FormatError(f"kernel header declares {h} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != w:
            raise FormatError(f"kernel row {i} has {len(vals)} values, expected {w}")
        try:
            rows.append([np.float32(v) for v in vals])
        except ValueError:
            raise FormatError(f"non-numeric value in kernel row {i}") from None
    arr = np.array(rows, dtype=np.float32)
    if h % 2 == 0 or w % 2 == 0:
        raise ConfigurationError(f"kernel dimensions must be odd, got {h}x{w}")
    return Kernel.normalized(arr)


def format_kernel_text(k: Kernel) -> str:
    k = as_kernel(k)
    h, w = k.shape
    body = "\n".join(" ".join(np.format_float_positional(v, trim="-") for v in row) for row in k.weights)
    return f"{h} {w}\n{body}\n"


def load_kernel(path) -> Kernel:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read kernel file {path}: {exc}") from exc
    return parse_kernel_text(text)


def save_kernel(path, k: Kernel) -> None:
    Path(path).write_text(format_kernel_text(k), encoding="ascii")
