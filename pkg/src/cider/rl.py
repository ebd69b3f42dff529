"""Richardson-Lucy deconvolution in image space and per feature channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .errors import ConfigurationError, InputError
from .features import depositify, positify


@dataclass(frozen=True)
class RLConfig:
    iterations: int = 50
    denom_floor: float = 1e-12
    init: str = "observed"  # or "constant" (0.5 everywhere)
    boundary: str = "replicate"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"RL iterations must be >= 1, got {self.iterations}")
        if self.denom_floor <= 0:
            raise ConfigurationError("denom_floor must be positive")
        if self.init not in ("observed", "constant"):
            raise ConfigurationError(f"unknown RL init {self.init!r}")


FEATURE_RL = RLConfig(iterations=30)


def rl_step(x: np.ndarray, y: np.ndarray, k: tc.Kernel, floor: float, mode) -> np.ndarray:
    reblurred = tc.conv2d_same(x, k, mode)
    ratio = y / np.maximum(reblurred, np.float32(floor))
    return x * tc.correlate2d_same(ratio, k, mode)


def rl_image(y, k, cfg: RLConfig = RLConfig()) -> np.ndarray:
    """Classic multiplicative RL update ``x <- x * (k^T * (y / (k * x)))``."""
    k = tc.as_kernel(k)
    obs = tc.as_tensor(y)
    tc.check_finite(obs)
    if np.any(obs < 0):
        raise InputError("Richardson-Lucy needs non-negative pixels")
    x = obs.copy() if cfg.init == "observed" else np.full_like(obs, 0.5)
    for _ in range(cfg.iterations):
        x = rl_step(x, obs, k, cfg.denom_floor, cfg.boundary)
    return x[0] if np.ndim(y) == 2 else x


def rl_features(stack, k, cfg: RLConfig = FEATURE_RL) -> np.ndarray:
    """Deconvolve each feature map independently.

    Feature maps can be negative, so each channel is first mapped affinely
    into ``[eps, 1]``, deconvolved, and mapped back.
    """
    pos, norm = positify(stack)
    out = np.empty_like(pos)
    for c in range(pos.shape[0]):
        out[c] = rl_image(pos[c], k, cfg)
    return depositify(out, norm)
