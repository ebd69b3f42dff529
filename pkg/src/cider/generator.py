"""Compact encoder-decoder that synthesises the restored image.

Each level ``i`` of the network sees an input ``x`` and produces a map at the
same resolution with ``channels[i]`` channels::

    skip  = block1x1(x -> skip_channels)
    down  = block3x3(block3x3_stride2(x -> channels[i]))
    down  = level(i + 1, down)              # if not the deepest level
    out   = block1x1(block3x3(concat(skip, upsample2(down))))

where a block is convolution, instance normalisation and LeakyReLU. A 1x1
convolution with a sigmoid maps level 0 to the single output channel. The
skip branch is deliberately thin, so most capacity sits in the encoder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import rng as rngmod
from . import weights as wfile
from .errors import ArchitectureError, BudgetError, ConfigurationError, ShapeError

PARAM_BUDGET = 1_000_000


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 16
    channels: tuple[int, ...] = (32, 64, 96)
    skip_channels: int = 4
    slope: float = 0.1
    padding: str = "reflect"
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels:
            raise ConfigurationError("generator needs at least one level (depth >= 1)")
        if min(self.channels) < 1 or self.in_channels < 1 or self.skip_channels < 1:
            raise ConfigurationError("channel counts must be positive")

    @property
    def depth(self) -> int:
        return len(self.channels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


def layer_shapes(cfg: GeneratorConfig) -> dict[str, tuple[int, ...]]:
    """Architecture descriptor: parameter name -> shape."""
    shapes: dict[str, tuple[int, ...]] = {}

    def block(name, cin, cout, k):
        shapes[f"{name}.weight"] = (cout, cin, k, k)
        shapes[f"{name}.scale"] = (cout,)
        shapes[f"{name}.shift"] = (cout,)

    cin = cfg.in_channels
    for i, c in enumerate(cfg.channels):
        block(f"l{i}.skip", cin, cfg.skip_channels, 1)
        block(f"l{i}.down1", cin, c, 3)
        block(f"l{i}.down2", c, c, 3)
        deeper = cfg.channels[i + 1] if i + 1 < cfg.depth else c
        block(f"l{i}.up1", cfg.skip_channels + deeper, c, 3)
        block(f"l{i}.up2", c, c, 1)
        cin = c
    shapes["head.weight"] = (1, cfg.channels[0], 1, 1)
    shapes["head.bias"] = (1,)
    return shapes


def count_for(cfg: GeneratorConfig) -> int:
    return int(sum(np.prod(s) for s in layer_shapes(cfg).values()))


class GeneratorNet:
    def __init__(self, cfg: GeneratorConfig, params: ad.ParamSet):
        self.cfg = cfg
        self.params = params

    def param_count(self) -> int:
        return self.params.param_count()

    def forward(self, features, params: ad.ParamSet | None = None) -> ad.Node:
        return forward(self, features, params)

    def save(self, path) -> None:
        wfile.save(path, self.params.arrays())

    @classmethod
    def load(cls, path, cfg: GeneratorConfig) -> "GeneratorNet":
        arrays = wfile.load(path)
        expected = layer_shapes(cfg)
        if set(arrays) != set(expected):
            raise ArchitectureError("saved parameters do not match the generator configuration")
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ArchitectureError(f"{name}: saved shape {arrays[name].shape}, expected {shape}")
        return cls(cfg, ad.ParamSet(arrays))


def init(cfg: GeneratorConfig = GeneratorConfig()) -> GeneratorNet:
    """Seeded fan-in-scaled uniform initialisation.

    Convolution weights are drawn from ``U(-sqrt(3/fan_in), sqrt(3/fan_in))``;
    normalisation scales start at 1, shifts and the head bias at 0.
    """
    total = count_for(cfg)
    if total > PARAM_BUDGET:
        raise BudgetError(f"generator would have {total} parameters (budget {PARAM_BUDGET})")
    gen = rngmod.stream(cfg.seed, "generator-init")
    params = ad.ParamSet()
    for name, shape in sorted(layer_shapes(cfg).items()):
        if name.endswith(".weight"):
            bound = np.sqrt(3.0 / np.prod(shape[1:]))
            value = gen.uniform(-bound, bound, size=shape)
        elif name.endswith(".scale"):
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        params.add(name, value.astype(np.float32))
    return GeneratorNet(cfg, params)


def param_count(net) -> int:
    """Learnable element count of a :class:`GeneratorNet` or :class:`ParamSet`."""
    return net.param_count()


def _block(p, x, name, slope, padding, stride=1):
    y = ad.learnable_conv2d(x, p[f"{name}.weight"], None, stride=stride, padding=padding)
    y = ad.instance_norm(y, p[f"{name}.scale"], p[f"{name}.shift"])
    return ad.leaky_relu(y, slope)


def _level(p, x, i, cfg):
    block = lambda t, n, **kw: _block(p, t, f"l{i}.{n}", cfg.slope, cfg.padding, **kw)  # noqa: E731
    skip = block(x, "skip")
    down = block(block(x, "down1", stride=2), "down2")
    if i + 1 < cfg.depth:
        down = _level(p, down, i + 1, cfg)
    merged = ad.concat_channels(skip, ad.upsample2(down))
    return block(block(merged, "up1"), "up2")


def forward(net: GeneratorNet, features, params: ad.ParamSet | None = None) -> ad.Node:
    """Map a feature stack to a single-channel image in (0, 1).

    ``params`` overrides the network's own parameters (used for
    finite-difference checks on float64 copies).
    """
    cfg = net.cfg
    p = params if params is not None else net.params
    x = features if isinstance(features, ad.Node) else ad.constant(features)
    c, h, w = x.shape
    if c != cfg.in_channels:
        raise ShapeError(f"generator expects {cfg.in_channels} input channels, got {c}")
    step = 2**cfg.depth
    if h % step or w % step:
        raise ShapeError(f"generator input {h}x{w} must be divisible by {step}")
    out = _level(p, x, 0, cfg)
    out = ad.learnable_conv2d(out, p["head.weight"], p["head.bias"], padding=cfg.padding)
    return ad.sigmoid(out)
