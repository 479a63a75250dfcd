# autodiff/optim.py

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from exceptions import TensorError


@dataclass
class AdamState:
    """Per-parameter moments keyed by parameter name, plus the shared step counter."""

    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """
    One bias-corrected Adam update, applied in place.

    :param params: Mapping of name to Tensor
    :param grads: Mapping of name to gradient array (missing names are skipped)
    :param state: AdamState, advanced by one step
    :return: Tuple (params, state)
    """
    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for name, param in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != param.shape:
            raise TensorError(f"gradient for {name} has shape {g.shape}, expected {param.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name], state.v[name] = m.astype(param.dtype), v.astype(param.dtype)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data = (param.data - update).astype(param.dtype)
    return params, state


class Adam:
    """Adam over a fixed set of named parameters reading their ``.grad`` fields."""

    def __init__(self, params, lr=1e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self):
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
