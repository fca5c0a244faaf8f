"""Adam optimizer and parameter initialisers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ParameterError
from .tensor import Tensor


@dataclass
class AdamState:
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
    lr: float,
) -> None:
    """Apply one bias-corrected Adam update to ``params`` in place.

    Parameters with a missing gradient are treated as having a zero gradient.
    """
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ParameterError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ParameterError(f"optimizer state for {name} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


class Adam:
    """Thin stateful wrapper around :func:`adam_step` for a named parameter set."""

    def __init__(self, params: Mapping[str, Tensor], beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = params
        self.state = AdamState(beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, lr: float) -> None:
        adam_step(self.params, {k: p.grad for k, p in self.params.items()}, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def random_orthonormal(rng: np.random.Generator, m: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))
