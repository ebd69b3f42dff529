"""NAdam updates and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class LrSchedule:
    base: float = 0.01
    milestones: tuple[int, ...] = (2000, 2300, 2700)
    factor: float = 0.5

    def lr_at(self, t: int) -> float:
        """Learning rate at iteration ``t``; a milestone applies from that step on."""
        drops = sum(1 for m in self.milestones if t >= m)
        return self.base * self.factor**drops


def lr_at(schedule: LrSchedule, t: int) -> float:
    return schedule.lr_at(t)


@dataclass
class NAdamState:
    """Adam with Nesterov momentum and the momentum-decay schedule of Dozat.

    ``mu_t = beta1 * (1 - 0.5 * 0.96 ** (t * momentum_decay))``; the update is

    ``m_hat = mu_{t+1} m_t / (1 - prod_{i<=t+1} mu_i) + (1 - mu_t) g / (1 - prod_{i<=t} mu_i)``
    ``theta -= lr * m_hat / (sqrt(v_t / (1 - beta2^t)) + eps)``
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum_decay: float = 4e-3
    t: int = 0
    mu_product: float = 1.0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def mu(self, t: int) -> float:
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * self.momentum_decay))


def nadam_step(state: NAdamState, params: dict, grads: dict, lr: float) -> None:
    """Update ``params`` (name -> array) in place from ``grads``."""
    if set(params) != set(grads):
        raise ContractError("params and grads must have the same names")
    state.t += 1
    t = state.t
    mu_t, mu_next = state.mu(t), state.mu(t + 1)
    state.mu_product *= mu_t
    prod_t = state.mu_product
    prod_next = prod_t * mu_next
    bias2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p, g = params[name], grads[name]
        if p.shape != g.shape:
            raise ContractError(f"{name}: parameter shape {p.shape} vs gradient shape {g.shape}")
        g = g.astype(np.float64)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        denom = np.sqrt(v / bias2) + state.eps
        step = (mu_next / (1.0 - prod_next)) * m + ((1.0 - mu_t) / (1.0 - prod_t)) * g
        p -= (lr * step / denom).astype(p.dtype)
