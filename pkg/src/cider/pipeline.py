"""End-to-end restoration and degradation simulation."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import background as bgmod
from . import features as feat
from . import generator as gen
from . import rng as rngmod
from . import tensor as tc
from .errors import CiderError, ConfigurationError, InputError, ShapeError
from .losses import LossWeights, total_loss
from .optim import LrSchedule, NAdamState, nadam_step
from .rl import RLConfig, rl_features

log = logging.getLogger(__name__)


class NumericalError(CiderError):
    """The optimisation produced a non-finite loss."""


@dataclass(frozen=True)
class RestoreConfig:
    iterations: int = 3000
    rl_iterations: int = 30
    weights: LossWeights = LossWeights()
    microscopy: bool = False
    seed: int = 42
    boundary: str = "replicate"
    bank: str = "analytic"
    schedule: LrSchedule = LrSchedule()
    channels: tuple[int, ...] = (32, 64, 96)
    skip_channels: int = 4
    background_iters: int = 3
    background_levels: int = 7

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations (T) must be >= 1, got {self.iterations}")
        if self.rl_iterations < 1:
            raise ConfigurationError(f"rl_iterations must be >= 1, got {self.rl_iterations}")
        tc.BoundaryMode.parse(self.boundary)
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    def generator_config(self) -> gen.GeneratorConfig:
        return gen.GeneratorConfig(channels=self.channels, skip_channels=self.skip_channels, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["schedule"]["milestones"] = list(self.schedule.milestones)
        d["weights"]["lambda"] = d["weights"].pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RestoreConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        try:
            if "weights" in d:
                wd = dict(d["weights"])
                if "lambda" in wd:
                    wd["lam"] = wd.pop("lambda")
                d["weights"] = LossWeights(**wd)
            if "schedule" in d:
                s = dict(d["schedule"])
                if "milestones" in s:
                    s["milestones"] = tuple(s["milestones"])
                d["schedule"] = LrSchedule(**s)
            if "channels" in d:
                d["channels"] = tuple(d["channels"])
        except TypeError as exc:
            raise ConfigurationError(f"bad config: {exc}") from exc
        return cls(**d)

    def updated(self, **changes) -> "RestoreConfig":
        return replace(self, **changes)

    def config_hash(self) -> str:
        """SHA-256 over the canonical JSON form; equal configs hash equal."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RestoreResult:
    image: np.ndarray
    loss_trace: list[float] = field(default_factory=list)
    param_count: int = 0
    config_hash: str = ""
    background: np.ndarray | None = None
    features: np.ndarray | None = None


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CiderError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def load_bank(spec: str) -> feat.FilterBank:
    return feat.analytic_bank() if spec == "analytic" else feat.load_weights(spec)


def _pad_to_multiple(x: np.ndarray, step: int, mode) -> tuple[np.ndarray, tuple[slice, slice]]:
    _, h, w = x.shape
    ph, pw = (-h) % step, (-w) % step
    rows = tc.boundary_index(h, ph // 2, ph - ph // 2, mode)
    cols = tc.boundary_index(w, pw // 2, pw - pw // 2, mode)
    return x[:, rows][:, :, cols], (slice(ph // 2, ph // 2 + h), slice(pw // 2, pw // 2 + w))


def restore(y, k, cfg: RestoreConfig = RestoreConfig(),
            callback: Callable[[int, float, dict], None] | None = None) -> RestoreResult:
    """Restore a sharp image from a blurred observation ``y`` and kernel ``k``.

    Steps: optional background removal, feature extraction, per-channel
    Richardson-Lucy on the features, then ``cfg.iterations`` NAdam steps on a
    freshly seeded generator that maps the deconvolved features to an image.
    ``callback(t, loss, parts)`` is called after every step.
    """
    k = tc.as_kernel(k)
    obs = tc.as_tensor(y)
    if obs.shape[0] != 1:
        raise ShapeError(f"restore works on single-channel images, got {obs.shape}")
    tc.check_finite(obs)
    background = None
    if cfg.microscopy:
        est = _stage("background", bgmod.estimate_background, obs, cfg.background_iters, cfg.background_levels)
        background = est.background[None]
        obs = _stage("background", bgmod.remove_background, obs, estimate=est)
    bank = _stage("features", load_bank, cfg.bank)
    stack = _stage("features", feat.extract_features, obs, bank)
    deconvolved = _stage("rl_features", rl_features, stack, k, RLConfig(cfg.rl_iterations, boundary=cfg.boundary))

    net = _stage("generator", gen.init, cfg.generator_config())
    padded, crop = _pad_to_multiple(deconvolved, 2**net.cfg.depth, cfg.boundary)
    inp = ad.constant(padded)
    params = net.params
    state = NAdamState()
    trace: list[float] = []

    def synth() -> ad.Node:
        return ad.slice_(gen.forward(net, inp), rows=crop[0], cols=crop[1])

    for t in range(1, cfg.iterations + 1):
        parts: dict = {}
        x = synth()
        loss = total_loss(x, k, obs, cfg.weights, cfg.microscopy, parts, boundary=cfg.boundary)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"[optimise] non-finite loss at iteration {t}: terms={parts}")
        params.zero_grad()
        ad.backward(loss)
        arrays = {n: node.value for n, node in params.items()}
        grads = {n: node.grad for n, node in params.items()}
        nadam_step(state, arrays, grads, cfg.schedule.lr_at(t))
        trace.append(value)
        if callback is not None:
            callback(t, value, parts)
        if t % 250 == 0:
            log.debug("iteration %d loss %.6f %s", t, value, parts)
    image = synth().value
    return RestoreResult(image=image if np.ndim(y) == 3 else image[0], loss_trace=trace,
                         param_count=net.param_count(), config_hash=cfg.config_hash(),
                         background=background, features=deconvolved)


@dataclass(frozen=True)
class DegradationSpec:
    kernel: tc.Kernel
    noise: str = "none"  # "none" | "gaussian" | "poisson"
    sigma: float = 0.0
    peak: float = 1.0

    def __post_init__(self):
        if self.noise not in ("none", "gaussian", "poisson"):
            raise ConfigurationError(f"unknown noise model {self.noise!r}")
        if self.sigma < 0:
            raise ConfigurationError("noise sigma must be >= 0")
        if self.peak <= 0:
            raise ConfigurationError("Poisson peak must be > 0")


def simulate_blur(x, spec: DegradationSpec, seed: int = 0, boundary="replicate") -> np.ndarray:
    """Blur ``x`` with the kernel, add seeded noise and clamp to [0, 1]."""
    img = tc.as_tensor(x)
    tc.check_finite(img)
    if img.min() < 0 or img.max() > 1:
        raise InputError("simulate_blur expects pixel values in [0, 1]")
    y = tc.conv2d_same(img, spec.kernel, boundary).astype(np.float64)
    noise_rng = rngmod.stream(seed, "noise")
    if spec.noise == "gaussian" and spec.sigma > 0:
        y = y + noise_rng.normal(0.0, spec.sigma, size=y.shape)
    elif spec.noise == "poisson":
        y = noise_rng.poisson(np.maximum(y, 0) * spec.peak) / spec.peak
    out = np.clip(y, 0.0, 1.0).astype(np.float32)
    return out if np.ndim(x) == 3 else out[0]
