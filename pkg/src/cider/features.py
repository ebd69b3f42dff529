"""Feature stacks of the degraded image.

Two banks produce the 16 feature maps. The default analytic bank is a fixed
set of linear filters (identity, blurs, derivatives and oriented edges), so
each map is a plain convolution of the input. A loaded bank runs one
convolution layer followed by three residual blocks from a ``CIDRW001``
weights file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import tensor as tc
from . import weights as wfile
from .errors import ArchitectureError, ShapeError

N_FEATURES = 16
EPS = 1e-3
RESIDUAL_BLOCKS = 3


def _gaussian(size: int, sigma: float, center=(0.0, 0.0)) -> np.ndarray:
    r = np.arange(size) - size // 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    return np.exp(-((yy - center[0]) ** 2 + (xx - center[1]) ** 2) / (2 * sigma**2))


def _oriented_edge(angle: float, size: int = 7, sigma: float = 1.0, offset: float = 1.0) -> np.ndarray:
    dy, dx = offset * np.sin(angle), offset * np.cos(angle)
    f = _gaussian(size, sigma, (dy, dx)) - _gaussian(size, sigma, (-dy, -dx))
    return f / f[f > 0].sum()


def _analytic_filters() -> list[np.ndarray]:
    g1 = _gaussian(7, 1.0)
    g2 = _gaussian(13, 2.0)
    filters = [
        np.array([[1.0]]),
        g1 / g1.sum(),
        g2 / g2.sum(),
        np.array([[1.0, -1.0, 0.0]]),
        np.array([[1.0], [-1.0], [0.0]]),
        np.array([[1.0, -2.0, 1.0]]),
        np.array([[1.0], [-2.0], [1.0]]),
        np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]),
        np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]),
    ]
    filters += [_oriented_edge(np.pi * m / 7) for m in range(7)]
    return [f.astype(np.float32) for f in filters]


ANALYTIC_NAMES = (
    "identity", "gauss1", "gauss2", "dx", "dy", "dxx", "dyy", "dxy", "laplacian",
    *(f"edge{m}" for m in range(7)),
)


@dataclass(frozen=True)
class FilterBank:
    mode: str
    analytic_filters: tuple = ()
    layers: dict = field(default_factory=dict)

    @property
    def out_channels(self) -> int:
        if self.mode == "analytic":
            return len(self.analytic_filters)
        return self.layers["conv0.weight"].shape[0]


def analytic_bank() -> FilterBank:
    return FilterBank("analytic", tuple(_analytic_filters()))


def expected_layer_shapes(kernel_size: int = 3) -> dict[str, tuple[int, ...]]:
    k = kernel_size
    shapes = {"conv0.weight": (N_FEATURES, 1, k, k), "conv0.bias": (N_FEATURES,)}
    for b in range(1, RESIDUAL_BLOCKS + 1):
        for c in (1, 2):
            shapes[f"res{b}.conv{c}.weight"] = (N_FEATURES, N_FEATURES, k, k)
            shapes[f"res{b}.conv{c}.bias"] = (N_FEATURES,)
    return shapes


def bank_from_layers(layers: dict[str, np.ndarray]) -> FilterBank:
    """Validate layer tensors against the 1 conv + 3 residual block layout."""
    if "conv0.weight" not in layers:
        raise ArchitectureError("missing layer 'conv0.weight'")
    w0 = layers["conv0.weight"]
    if w0.ndim != 4 or w0.shape[2] != w0.shape[3] or w0.shape[2] % 2 == 0:
        raise ArchitectureError(f"conv0.weight must be (16, 1, k, k) with odd k, got {w0.shape}")
    if w0.shape[0] != N_FEATURES:
        raise ArchitectureError(f"conv0.weight has {w0.shape[0]} output channels, expected {N_FEATURES}")
    expected = expected_layer_shapes(w0.shape[2])
    missing = sorted(set(expected) - set(layers))
    extra = sorted(set(layers) - set(expected))
    if missing or extra:
        raise ArchitectureError(f"layer names do not match architecture: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if layers[name].shape != shape:
            raise ArchitectureError(f"layer {name!r} has shape {layers[name].shape}, expected {shape}")
    return FilterBank("loaded", layers={n: np.asarray(v, dtype=np.float32) for n, v in layers.items()})


def load_weights(path) -> FilterBank:
    return bank_from_layers(wfile.load(path))


def save_weights(path, bank: FilterBank) -> None:
    wfile.save(path, bank.layers)


def _conv(x: np.ndarray, layers, name: str) -> np.ndarray:
    return ad.learnable_conv2d(x, layers[f"{name}.weight"], layers[f"{name}.bias"], padding="replicate").value


def extract_features(y, bank: FilterBank | None = None) -> np.ndarray:
    """Return the ``(16, H, W)`` feature stack of a single-channel image."""
    bank = bank or analytic_bank()
    x = tc.as_tensor(y)
    if x.shape[0] != 1:
        raise ShapeError(f"feature extraction needs a single-channel image, got {x.shape}")
    tc.check_finite(x)
    if bank.mode == "analytic":
        out = np.concatenate([tc.conv2d_same(x, f, tc.BoundaryMode.REPLICATE) for f in bank.analytic_filters])
    else:
        out = _conv(x, bank.layers, "conv0")
        for b in range(1, RESIDUAL_BLOCKS + 1):
            h = np.maximum(_conv(out, bank.layers, f"res{b}.conv1"), 0)
            out = out + _conv(h, bank.layers, f"res{b}.conv2")
    if out.shape[0] != N_FEATURES:
        raise ShapeError(f"feature bank produced {out.shape[0]} channels, expected {N_FEATURES}")
    return out.astype(np.float32)


@dataclass
class FeatureNormalization:
    """Per-channel affine map into ``[eps, 1]``; constant channels go to 0.5."""

    low: np.ndarray
    high: np.ndarray
    eps: float = EPS

    @property
    def constant(self) -> np.ndarray:
        return self.high <= self.low


def positify(stack, eps: float = EPS) -> tuple[np.ndarray, FeatureNormalization]:
    x = tc.as_tensor(stack, dtype=np.float64)
    low = x.min(axis=(1, 2))
    high = x.max(axis=(1, 2))
    norm = FeatureNormalization(low, high, eps)
    span = np.where(norm.constant, 1.0, high - low)[:, None, None]
    out = (x - low[:, None, None]) / span * (1 - eps) + eps
    out[norm.constant] = 0.5
    return out.astype(np.float32), norm


def depositify(stack, norm: FeatureNormalization) -> np.ndarray:
    z = tc.as_tensor(stack, dtype=np.float64)
    span = np.where(norm.constant, 0.0, norm.high - norm.low)[:, None, None]
    out = (z - norm.eps) / (1 - norm.eps) * span + norm.low[:, None, None]
    return out.astype(np.float32)
