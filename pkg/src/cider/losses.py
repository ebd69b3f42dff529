"""Training objective terms and image-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import tensor as tc
from .errors import ConfigurationError, ShapeError

PSNR_CAP = 100.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    lam: float = 1e-5
    beta: float = 0.01

    def __post_init__(self):
        if min(self.alpha, self.lam, self.beta) < 0:
            raise ConfigurationError("loss weights must be non-negative")


@dataclass(frozen=True)
class SSIMParams:
    window: int = 11
    sigma: float = 1.5
    c1: float = 0.01**2
    c2: float = 0.03**2
    boundary: str = "replicate"

    def weights(self) -> np.ndarray:
        r = np.arange(self.window) - self.window // 2
        g = np.exp(-(r**2) / (2 * self.sigma**2))
        w = np.outer(g, g)
        return w / w.sum()


def _check_pair(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def ssim_map_node(a, b, p: SSIMParams = SSIMParams()) -> ad.Node:
    """Local SSIM map with a Gaussian window; both arguments may be nodes."""
    a, b = ad._node(a), ad._node(b)
    _check_pair(a.value, b.value, "ssim")
    w = p.weights()

    def filt(n):
        return ad.filter2d(n, w, p.boundary)

    mu_a, mu_b = filt(a), filt(b)
    mu_aa, mu_bb, mu_ab = ad.mul(mu_a, mu_a), ad.mul(mu_b, mu_b), ad.mul(mu_a, mu_b)
    var_a = ad.sub(filt(ad.mul(a, a)), mu_aa)
    var_b = ad.sub(filt(ad.mul(b, b)), mu_bb)
    cov = ad.sub(filt(ad.mul(a, b)), mu_ab)
    num = ad.mul(ad.add_scalar(ad.scalar_mul(mu_ab, 2.0), p.c1), ad.add_scalar(ad.scalar_mul(cov, 2.0), p.c2))
    den = ad.mul(ad.add_scalar(ad.add(mu_aa, mu_bb), p.c1), ad.add_scalar(ad.add(var_a, var_b), p.c2))
    return ad.div(num, den)


def ssim(a, b, p: SSIMParams = SSIMParams()) -> float:
    """Mean structural similarity of two single-channel images (float64)."""
    a64 = tc.as_tensor(a, dtype=np.float64)
    b64 = tc.as_tensor(b, dtype=np.float64)
    _check_pair(a64, b64, "ssim")
    return ad.mean(ssim_map_node(a64, b64, p)).item()


def psnr(a, b, peak: float = 1.0) -> float:
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    _check_pair(a64, b64, "psnr")
    mse = float(np.mean((a64 - b64) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(10.0 * np.log10(peak**2 / mse))


def loss_ssim(x, k, y, p: SSIMParams = SSIMParams(), boundary="replicate") -> ad.Node:
    """``1 - SSIM(x * k, y)``."""
    x = ad._node(x)
    target = tc.as_tensor(y, dtype=x.dtype)
    _check_pair(x.value, target, "loss_ssim")
    reblurred = ad.conv_fixed(x, k, boundary)
    return ad.add_scalar(ad.scalar_mul(ad.mean(ssim_map_node(reblurred, target, p)), -1.0), 1.0)


def hessian_reg(z) -> ad.Node:
    """``|z_xx|_1 + |z_yy|_1 + 2 |z_xy|_1`` over interior second differences."""
    z = ad._node(z)
    s = ad.slice_
    zxx = ad.add(ad.sub(s(z, cols=slice(2, None)), ad.scalar_mul(s(z, cols=slice(1, -1)), 2.0)), s(z, cols=slice(None, -2)))
    zyy = ad.add(ad.sub(s(z, rows=slice(2, None)), ad.scalar_mul(s(z, rows=slice(1, -1)), 2.0)), s(z, rows=slice(None, -2)))
    zxy = ad.add(
        ad.sub(s(z, rows=slice(1, None), cols=slice(1, None)), s(z, rows=slice(1, None), cols=slice(None, -1))),
        ad.sub(s(z, rows=slice(None, -1), cols=slice(None, -1)), s(z, rows=slice(None, -1), cols=slice(1, None))),
    )
    terms = [ad.sum_(ad.abs_(d)) for d in (zxx, zyy) if d.value.size]
    if zxy.value.size:
        terms.append(ad.scalar_mul(ad.sum_(ad.abs_(zxy)), 2.0))
    if not terms:
        return ad.constant(np.zeros((1, 1, 1), dtype=z.dtype))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def sparsity_l1(x) -> ad.Node:
    return ad.sum_(ad.abs_(ad._node(x)))


def total_loss(x, k, y, w: LossWeights = LossWeights(), microscopy: bool = False,
               parts: dict | None = None, ssim_params: SSIMParams = SSIMParams(),
               boundary="replicate") -> ad.Node:
    """Weighted objective; the sparsity term is only built in microscopy mode.

    Terms with a zero weight are skipped entirely. When ``parts`` is a dict it
    receives the unweighted value of each evaluated term.
    """
    x = ad._node(x)
    terms = []
    if w.alpha:
        t = loss_ssim(x, k, y, ssim_params, boundary)
        terms.append(ad.scalar_mul(t, w.alpha))
        if parts is not None:
            parts["ssim"] = t.item()
    if w.lam:
        t = hessian_reg(x)
        terms.append(ad.scalar_mul(t, w.lam))
        if parts is not None:
            parts["hessian"] = t.item()
    if microscopy and w.beta:
        t = sparsity_l1(x)
        terms.append(ad.scalar_mul(t, w.beta))
        if parts is not None:
            parts["sparsity"] = t.item()
    if not terms:
        return ad.constant(np.zeros((1, 1, 1), dtype=x.dtype))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total
