"""Tape-based reverse-mode automatic differentiation on ``(C, H, W)`` arrays.

Every primitive returns a :class:`Node` holding its forward value and a
closure that maps the output gradient to gradients for each parent. Calling
:func:`backward` on a scalar node walks the graph in reverse topological
order, visiting each node once.

Values keep the dtype they are computed in, so the same graph builders run in
float32 for optimisation and in float64 for finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage

from . import tensor as tc
from .errors import ContractError, ShapeError

_ACTIVE_TAPES: list["Tape"] = []
# sign patterns of kinked inputs, collected only while grad_check probes
_KINK_LOG: list[list[np.ndarray]] = []


def _log_kinks(v: np.ndarray) -> None:
    if _KINK_LOG:
        _KINK_LOG[-1].append(v > 0)


class Node:
    __slots__ = ("value", "parents", "rule", "op", "requires_grad", "name", "_grad")

    def __init__(self, value, parents=(), rule=None, op="leaf", requires_grad=False, name=""):
        self.value = value
        self.parents = tuple(parents)
        self.rule = rule
        self.op = op
        self.requires_grad = requires_grad
        self.name = name
        self._grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g):
        self._grad = g

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node({self.op}{label}, shape={self.shape}, dtype={self.dtype})"


class Tape:
    """Records every primitive evaluated while the tape is active.

    >>> with Tape() as tape:
    ...     y = sigmoid(constant(np.zeros((1, 2, 2))))
    >>> len(tape)
    1
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def reset(self) -> None:
        for n in self.nodes:
            n.zero_grad()


def constant(x, name: str = "") -> Node:
    if isinstance(x, Node):
        return x
    return Node(tc.as_float(x), name=name)


def parameter(x, name: str = "") -> Node:
    return Node(np.array(x, dtype=np.asarray(x).dtype), requires_grad=True, name=name)


def _node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _raw(x) -> Node:
    """Wrap a weight-like array of any rank without reshaping it."""
    if isinstance(x, Node):
        return x
    arr = np.asarray(x)
    return Node(arr if arr.dtype in (np.float32, np.float64) else arr.astype(tc.DTYPE))


def _record(value, parents, rule, op) -> Node:
    node = Node(value, parents, rule, op, requires_grad=any(p.requires_grad for p in parents))
    if _ACTIVE_TAPES:
        _ACTIVE_TAPES[-1].nodes.append(node)
    return node


def _same_shape(op, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _topological(loss: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological(loss)
    for n in order:
        if n.rule is not None:
            n._grad = None
    loss._grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.rule is None or node._grad is None:
            continue
        grads = node.rule(node._grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent._grad = g if parent._grad is None else parent._grad + g


# ---------------------------------------------------------------------------
# Elementwise primitives


def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    _same_shape("add", a, b)
    return _record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    _same_shape("sub", a, b)
    return _record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Node:
    a, b = _node(a), _node(b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _record(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b) -> Node:
    a, b = _node(a), _node(b)
    _same_shape("div", a, b)
    av, bv = a.value, b.value
    out = av / bv
    return _record(out, (a, b), lambda g: (g / bv, -g * out / bv), "div")


def scalar_mul(a, c: float) -> Node:
    a = _node(a)
    c = a.dtype.type(c)
    return _record(a.value * c, (a,), lambda g: (g * c,), "scalar_mul")


def add_scalar(a, c: float) -> Node:
    a = _node(a)
    return _record(a.value + a.dtype.type(c), (a,), lambda g: (g,), "add_scalar")


def square(a) -> Node:
    a = _node(a)
    av = a.value
    return _record(av * av, (a,), lambda g: (2 * g * av,), "square")


def abs_(a) -> Node:
    """Absolute value with subgradient 0 at 0."""
    a = _node(a)
    s = np.sign(a.value)
    _log_kinks(a.value)
    return _record(np.abs(a.value), (a,), lambda g: (g * s,), "abs")


def leaky_relu(a, slope: float = 0.1) -> Node:
    a = _node(a)
    slope = a.dtype.type(slope)
    _log_kinks(a.value)
    d = np.where(a.value > 0, a.dtype.type(1), slope)
    return _record(a.value * d, (a,), lambda g: (g * d,), "leaky_relu")


def relu(a) -> Node:
    return leaky_relu(a, 0.0)


def sigmoid(a) -> Node:
    a = _node(a)
    out = 0.5 * (np.tanh(0.5 * a.value) + 1)
    out = out.astype(a.dtype, copy=False)
    return _record(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


# ---------------------------------------------------------------------------
# Reductions and reshaping


def sum_(a) -> Node:
    a = _node(a)
    shape = a.shape
    out = np.array(a.value.sum(dtype=np.float64), dtype=a.dtype).reshape(1, 1, 1)
    return _record(out, (a,), lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),), "sum")


def mean(a) -> Node:
    a = _node(a)
    shape, n = a.shape, a.value.size
    out = np.array(a.value.mean(dtype=np.float64), dtype=a.dtype).reshape(1, 1, 1)
    return _record(out, (a,), lambda g: (np.full(shape, g.reshape(()) / n, dtype=g.dtype),), "mean")


def slice_(a, rows: slice = slice(None), cols: slice = slice(None), channels: slice = slice(None)) -> Node:
    a = _node(a)
    key = (channels, rows, cols)
    shape = a.shape

    def rule(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[key] = g
        return (out,)

    return _record(a.value[key].copy(), (a,), rule, "slice")


def concat_channels(*nodes) -> Node:
    nodes = [_node(n) for n in nodes]
    hw = nodes[0].shape[1:]
    for n in nodes[1:]:
        if n.shape[1:] != hw:
            raise ShapeError(f"concat_channels: spatial mismatch {nodes[0].shape} vs {n.shape}")
    bounds = np.cumsum([0] + [n.shape[0] for n in nodes])

    def rule(g):
        return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _record(np.concatenate([n.value for n in nodes], axis=0), nodes, rule, "concat_channels")


def upsample2(a) -> Node:
    """Nearest-neighbour 2x upsampling."""
    a = _node(a)
    c, h, w = a.shape

    def rule(g):
        return (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),)

    return _record(tc.resample(a.value, "up", "nearest"), (a,), rule, "upsample2")


# ---------------------------------------------------------------------------
# Fixed-kernel filtering


def filter2d(a, weights, mode=tc.BoundaryMode.REPLICATE) -> Node:
    """Same-size correlation of every channel with fixed ``weights``.

    The forward value is exactly :func:`cider.tensor.correlate2d_same`. The
    backward pass is the exact adjoint for the chosen boundary mode: a full
    convolution of the gradient followed by folding the padding back.
    """
    a = _node(a)
    w = np.asarray(weights.weights if isinstance(weights, tc.Kernel) else weights, dtype=np.float64)
    c, h, wd = a.shape
    rh, rw = w.shape[0] // 2, w.shape[1] // 2
    out = tc.correlate2d_same(a.value, w.astype(a.dtype), mode)

    def rule(g):
        g64 = g.astype(np.float64)
        full = np.empty((c, h + 2 * rh, wd + 2 * rw))
        for i in range(c):
            gp = np.pad(g64[i], ((rh, rh), (rw, rw)))
            full[i] = ndimage.convolve(gp, w, mode="constant")
        return (tc.unpad(full, h, wd, rh, rw, mode).astype(g.dtype),)

    return _record(out, (a,), rule, "filter2d")


def conv_fixed(a, k, mode=tc.BoundaryMode.REPLICATE) -> Node:
    """Same-size convolution with a fixed kernel (blur by a PSF)."""
    w = k.weights if isinstance(k, tc.Kernel) else np.asarray(k)
    return filter2d(a, np.ascontiguousarray(w[::-1, ::-1]), mode)


# ---------------------------------------------------------------------------
# Learnable layers


def learnable_conv2d(x, weight, bias=None, stride: int = 1, padding="reflect") -> Node:
    """2D convolution layer (cross-correlation, as in deep-learning frameworks).

    ``weight`` has shape ``(c_out, c_in, kh, kw)`` with odd kernel sizes; the
    input is padded by ``k // 2`` using ``padding`` so that ``stride=1``
    preserves the spatial size and ``stride=2`` halves even sizes.
    """
    x, weight = _node(x), _raw(weight)
    bias = _raw(bias) if bias is not None else None
    co, ci, kh, kw = weight.shape
    c, h, w = x.shape
    if c != ci:
        raise ShapeError(f"learnable_conv2d: input {x.shape} vs weight {weight.shape}")
    if bias is not None and bias.value.size != co:
        raise ShapeError(f"learnable_conv2d: bias {bias.shape} vs weight {weight.shape}")
    ph, pw = kh // 2, kw // 2
    xp = tc.pad(x.value, ph, pw, padding) if (ph or pw) else x.value
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    cols = np.empty((ci, kh, kw, ho, wo), dtype=xp.dtype)
    for a in range(kh):
        for b in range(kw):
            cols[:, a, b] = xp[:, a : a + stride * ho : stride, b : b + stride * wo : stride]
    cols = cols.reshape(ci * kh * kw, ho * wo)
    wm = weight.value.reshape(co, -1)
    out = wm @ cols
    if bias is not None:
        out += bias.value.reshape(co, 1)
    out = out.reshape(co, ho, wo)

    def rule(g):
        g2 = g.reshape(co, -1)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gb = g2.sum(axis=1).reshape(bias.shape) if bias is not None else None
        gx = None
        if x.requires_grad:
            gcols = (wm.T @ g2).reshape(ci, kh, kw, ho, wo)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for a in range(kh):
                for b in range(kw):
                    gxp[:, a : a + stride * ho : stride, b : b + stride * wo : stride] += gcols[:, a, b]
            gx = tc.unpad(gxp, h, w, ph, pw, padding) if (ph or pw) else gxp
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _record(out, parents, rule, "conv2d")


def strided_conv_down2(x, weight, bias=None, padding="reflect") -> Node:
    return learnable_conv2d(x, weight, bias, stride=2, padding=padding)


def instance_norm(x, scale=None, shift=None, eps: float = 1e-5) -> Node:
    """Per-channel normalisation over the spatial axes with optional affine."""
    x = _node(x)
    c = x.shape[0]
    xv = x.value
    mu = xv.mean(axis=(1, 2), keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + xv.dtype.type(eps))
    xhat = xc * inv
    parents = [x]
    gamma = beta = None
    out = xhat
    if scale is not None:
        gamma = _raw(scale)
        parents.append(gamma)
        out = out * gamma.value.reshape(c, 1, 1)
    if shift is not None:
        beta = _raw(shift)
        parents.append(beta)
        out = out + beta.value.reshape(c, 1, 1)

    def rule(g):
        grads = []
        gh = g * gamma.value.reshape(c, 1, 1) if gamma is not None else g
        gx = inv * (gh - gh.mean(axis=(1, 2), keepdims=True) - xhat * (gh * xhat).mean(axis=(1, 2), keepdims=True))
        grads.append(gx)
        if gamma is not None:
            grads.append((g * xhat).sum(axis=(1, 2)).reshape(gamma.shape))
        if beta is not None:
            grads.append(g.sum(axis=(1, 2)).reshape(beta.shape))
        return tuple(grads)

    return _record(out, parents, rule, "instance_norm")


# ---------------------------------------------------------------------------
# Parameter containers


class ParamSet:
    """Named learnable tensors iterated in sorted-name order."""

    def __init__(self, params: dict | None = None):
        self._params: dict[str, Node] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Node:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        node = value if isinstance(value, Node) else parameter(value, name)
        node.name = name
        node.requires_grad = True
        self._params[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> list[tuple[str, Node]]:
        return [(n, self._params[n]) for n in self.names()]

    def __iter__(self):
        return iter(self.items())

    def param_count(self) -> int:
        return int(sum(n.value.size for n in self._params.values()))

    def zero_grad(self) -> None:
        for n in self._params.values():
            n.zero_grad()

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: node.value for n, node in self.items()}

    def astype(self, dtype) -> "ParamSet":
        return ParamSet({n: np.array(node.value, dtype=dtype) for n, node in self.items()})


# ---------------------------------------------------------------------------
# Finite-difference verification


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self):
        lines = [f"{name}: max rel err {err:.3e} over {self.checked[name]} elements"
                 + (f" ({self.skipped[name]} skipped at kinks)" if self.skipped.get(name) else "")
                 for name, err in self.errors.items()]
        return "\n".join(lines + [f"overall: {self.max_error:.3e}"])


def grad_check(
    build: Callable[[ParamSet], Node],
    params: ParamSet,
    seed: int = 0,
    h: float = 1e-3,
    max_elements: int | None = None,
    names: Iterable[str] | None = None,
    skip_kinks: bool = False,
) -> GradCheckReport:
    """Compare autodiff gradients against central finite differences.

    ``build`` maps a :class:`ParamSet` to a scalar loss node. The check runs on
    a float64 copy of ``params``. When ``max_elements`` is given, at most that
    many entries of each tensor (chosen with ``seed``) are perturbed.
    Errors are ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-6)``.

    With ``skip_kinks``, an entry is left out (and counted in ``skipped``)
    when the +h or -h evaluation moves any ``abs``/``leaky_relu`` input across
    zero, because the central difference then straddles a kink and is not an
    estimate of the derivative at the point.
    """
    work = params.astype(np.float64)
    if len(work) == 0:
        raise ContractError("grad_check needs at least one parameter")
    rng = np.random.default_rng(seed)
    if skip_kinks:
        _KINK_LOG.append([])
    try:
        loss = build(work)
    finally:
        base_pattern = _KINK_LOG.pop() if skip_kinks else None
    backward(loss)
    report = GradCheckReport()
    for name in names or work.names():
        node = work[name]
        analytic = node.grad.copy()
        flat = node.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        worst, skipped, used = 0.0, 0, 0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up, up_pattern = _probe(build, work, skip_kinks)
            flat[i] = orig - h
            down, down_pattern = _probe(build, work, skip_kinks)
            flat[i] = orig
            if skip_kinks and not (_same(base_pattern, up_pattern) and _same(base_pattern, down_pattern)):
                skipped += 1
                continue
            used += 1
            fd = (up - down) / (2 * h)
            ad = analytic.reshape(-1)[i]
            worst = max(worst, abs(ad - fd) / max(abs(ad), abs(fd), 1e-6))
        report.errors[name] = worst
        report.checked[name] = used
        report.skipped[name] = skipped
    return report


def _probe(build, params: ParamSet, enabled: bool):
    if not enabled:
        return build(params).item(), None
    _KINK_LOG.append([])
    try:
        value = build(params).item()
    finally:
        pattern = _KINK_LOG.pop()
    return value, pattern


def _same(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
